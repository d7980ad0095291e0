"""Synthetic coil-array models and dipole wrench maps.

Each coil is modeled as a point magnetic dipole with a fixed position, unit
axis, and a moment-per-ampere scale.  The magnetic field and its spatial
gradient at a point are linear in the coil currents; the stacked response is
summarized by a position-dependent actuation matrix with three field rows and
five gradient rows (zero divergence and zero curl leave only five independent
gradient components).

The module also provides the rigid-dipole wrench maps: the matrices that send
field/gradient values to magnetic torque and force on an axially magnetized
body, the lever-arm Jacobian of a pivoted actuator, and the closed-form SVD of
the torque map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

MU0 = 4.0e-7 * math.pi
"""Vacuum permeability [T·m/A]."""

_MU0_OVER_4PI = 1.0e-7

#: Positions closer than this to a coil center are rejected as singular [m].
MIN_COIL_DISTANCE = 1.0e-6

#: Relative singular-value cutoff shared by every pseudoinverse/rank check.
RANK_RTOL = 1.0e-10


class SingularPositionError(ValueError):
    """Raised when a field evaluation point coincides with a coil center."""


def skew(v: NDArray[np.floating]) -> NDArray[np.floating]:
    """Return the 3x3 cross-product matrix S(v) with S(v) @ u = v x u."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class CoilSpec:
    """One electromagnet, reduced to an equivalent point dipole.

    Attributes:
        position: Coil center in world coordinates [m].
        axis: Unit vector along the coil's magnetic axis.
        moment_per_ampere: Equivalent dipole moment per unit current [A·m²/A].
    """

    position: tuple[float, float, float]
    axis: tuple[float, float, float]
    moment_per_ampere: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.position, dtype=float)
        ax = np.asarray(self.axis, dtype=float)
        if pos.shape != (3,) or ax.shape != (3,):
            raise ValueError("coil position and axis must be 3-vectors")
        norm = np.linalg.norm(ax)
        if abs(norm - 1.0) > 1.0e-9:
            raise ValueError(f"coil axis must be unit length, got |axis| = {norm:.3e}")
        if not self.moment_per_ampere > 0.0:
            raise ValueError("moment_per_ampere must be strictly positive")
        object.__setattr__(self, "position", tuple(float(c) for c in pos))
        object.__setattr__(self, "axis", tuple(float(c) for c in ax))


@dataclass(frozen=True)
class ActuationModel:
    """A named collection of coils acting on a shared workspace."""

    name: str
    coils: tuple[CoilSpec, ...]

    def __post_init__(self) -> None:
        if len(self.coils) == 0:
            raise ValueError("an actuation model needs at least one coil")
        object.__setattr__(self, "coils", tuple(self.coils))

    @property
    def n_coils(self) -> int:
        return len(self.coils)

    @property
    def positions(self) -> NDArray[np.floating]:
        """Coil centers, stacked (n_coils, 3)."""
        return np.array([c.position for c in self.coils])

    @property
    def moments(self) -> NDArray[np.floating]:
        """Dipole moment per unit current of each coil, stacked (n_coils, 3)."""
        return np.array(
            [np.asarray(c.axis) * c.moment_per_ampere for c in self.coils]
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "coils": [
                {
                    "position": list(c.position),
                    "axis": list(c.axis),
                    "moment_per_ampere": c.moment_per_ampere,
                }
                for c in self.coils
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActuationModel":
        try:
            name = data["name"]
            coils = tuple(
                CoilSpec(
                    position=tuple(entry["position"]),
                    axis=tuple(entry["axis"]),
                    moment_per_ampere=float(entry["moment_per_ampere"]),
                )
                for entry in data["coils"]
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed coil model description: {exc}") from exc
        return cls(name=name, coils=coils)

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "ActuationModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def dipole_field(
    r: NDArray[np.floating], moment: NDArray[np.floating]
) -> NDArray[np.floating]:
    """Magnetic field of a point dipole.

    Args:
        r: Vector from the dipole to the evaluation point [m].
        moment: Dipole moment [A·m²].

    Returns:
        Field vector b [T] = (mu0 / 4 pi) * (3 r (m·r) / |r|^5 - m / |r|^3).
    """
    r = np.asarray(r, dtype=float)
    moment = np.asarray(moment, dtype=float)
    d2 = float(r @ r)
    if d2 < MIN_COIL_DISTANCE**2:
        raise SingularPositionError("field evaluation point coincides with dipole")
    d = math.sqrt(d2)
    return _MU0_OVER_4PI * (3.0 * r * float(moment @ r) / d**5 - moment / d**3)


def dipole_field_jacobian(
    r: NDArray[np.floating], moment: NDArray[np.floating]
) -> NDArray[np.floating]:
    """Spatial Jacobian db_i/dr_j of a point-dipole field (3x3).

    The result is symmetric and traceless, as required of any magnetostatic
    field gradient in a current-free region.
    """
    r = np.asarray(r, dtype=float)
    moment = np.asarray(moment, dtype=float)
    d2 = float(r @ r)
    if d2 < MIN_COIL_DISTANCE**2:
        raise SingularPositionError("gradient evaluation point coincides with dipole")
    d = math.sqrt(d2)
    mr = float(moment @ r)
    eye = np.eye(3)
    outer_rm = np.outer(r, moment)
    return _MU0_OVER_4PI * (
        3.0 * (mr * eye + outer_rm + outer_rm.T) / d**5
        - 15.0 * mr * np.outer(r, r) / d**7
    )


def pack_gradient(grad: NDArray[np.floating]) -> NDArray[np.floating]:
    """Reduce a symmetric traceless 3x3 gradient to its five free components.

    Component order: (db_x/dx, db_x/dy, db_x/dz, db_y/dy, db_y/dz).
    """
    g = np.asarray(grad, dtype=float)
    return np.array([g[0, 0], g[0, 1], g[0, 2], g[1, 1], g[1, 2]])


def unpack_gradient(g5: NDArray[np.floating]) -> NDArray[np.floating]:
    """Rebuild the full 3x3 gradient from its five free components.

    Symmetry fills the off-diagonal mirror terms and zero trace fixes
    db_z/dz = -(db_x/dx + db_y/dy).
    """
    g1, g2, g3, g4, g5_ = np.asarray(g5, dtype=float)
    return np.array(
        [
            [g1, g2, g3],
            [g2, g4, g5_],
            [g3, g5_, -g1 - g4],
        ]
    )


@dataclass(frozen=True)
class FieldState:
    """Field and packed gradient at a point."""

    b: NDArray[np.floating]
    g: NDArray[np.floating]

    @property
    def gradient_matrix(self) -> NDArray[np.floating]:
        return unpack_gradient(self.g)


def actuation_matrix(
    model: ActuationModel, p: NDArray[np.floating]
) -> NDArray[np.floating]:
    """Stacked field/gradient response to unit coil currents.

    Args:
        model: Coil array.
        p: Evaluation point in world coordinates [m].

    Returns:
        An (8, n_coils) matrix whose column j holds [b; g] produced by one
        ampere in coil j: three field components on top, five packed gradient
        components below.

    Raises:
        SingularPositionError: If p is within MIN_COIL_DISTANCE of a coil.
    """
    return actuation_matrices(model, np.asarray(p, dtype=float)[None, :])[0]


def actuation_matrices(
    model: ActuationModel, points: NDArray[np.floating]
) -> NDArray[np.floating]:
    """Vectorized actuation matrices for a batch of points: (N, 8, n_coils)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    centers = model.positions  # (n, 3)
    moments = model.moments  # (n, 3)
    r = points[:, None, :] - centers[None, :, :]  # (N, n, 3)
    d2 = np.einsum("pnk,pnk->pn", r, r)  # (N, n)
    if np.any(d2 < MIN_COIL_DISTANCE**2):
        bad = np.argwhere(d2 < MIN_COIL_DISTANCE**2)
        p_idx, c_idx = bad[0]
        raise SingularPositionError(
            f"evaluation point {p_idx} coincides with coil {c_idx} "
            f"of model '{model.name}'"
        )
    d = np.sqrt(d2)
    inv_d3 = d**-3
    inv_d5 = d**-5
    inv_d7 = d**-7
    mr = np.einsum("nk,pnk->pn", moments, r)  # (N, n)

    b_cols = _MU0_OVER_4PI * (
        3.0 * r * (mr * inv_d5)[:, :, None] - moments[None, :, :] * inv_d3[:, :, None]
    )  # (N, n, 3)

    # Gradient tensor per coil: 3 (mr I + r m^T + m r^T)/d^5 - 15 mr r r^T / d^7.
    eye = np.eye(3)
    outer_rm = r[:, :, :, None] * moments[None, :, None, :]  # (N, n, 3, 3)
    outer_rr = r[:, :, :, None] * r[:, :, None, :]
    grad = _MU0_OVER_4PI * (
        3.0
        * (
            mr[:, :, None, None] * eye[None, None, :, :]
            + outer_rm
            + np.swapaxes(outer_rm, -1, -2)
        )
        * inv_d5[:, :, None, None]
        - 15.0 * mr[:, :, None, None] * outer_rr * inv_d7[:, :, None, None]
    )  # (N, n, 3, 3)

    n = model.n_coils
    out = np.empty((points.shape[0], 8, n))
    out[:, 0:3, :] = np.swapaxes(b_cols, 1, 2)
    out[:, 3, :] = grad[:, :, 0, 0]
    out[:, 4, :] = grad[:, :, 0, 1]
    out[:, 5, :] = grad[:, :, 0, 2]
    out[:, 6, :] = grad[:, :, 1, 1]
    out[:, 7, :] = grad[:, :, 1, 2]
    return out


def field_matrix(model: ActuationModel, p: NDArray[np.floating]) -> NDArray[np.floating]:
    """Field rows of the actuation matrix: (3, n_coils)."""
    return actuation_matrix(model, p)[:3, :]


def field_and_gradient(
    model: ActuationModel, p: NDArray[np.floating], currents: NDArray[np.floating]
) -> FieldState:
    """Evaluate the superposed field and gradient produced by coil currents.

    Args:
        model: Coil array.
        p: Evaluation point [m].
        currents: Coil currents [A], length n_coils.

    Returns:
        FieldState with b (3,) in tesla and packed gradient g (5,) in T/m.
    """
    currents = np.asarray(currents, dtype=float)
    if currents.shape != (model.n_coils,):
        raise ValueError(
            f"expected {model.n_coils} currents, got shape {currents.shape}"
        )
    stacked = actuation_matrix(model, p) @ currents
    return FieldState(b=stacked[:3], g=stacked[3:])


# ---------------------------------------------------------------------------
# Pivoted dipole agents and wrench maps
# ---------------------------------------------------------------------------

_BODY_U = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DipoleAgent:
    """A pivoted axially magnetized body at a point in the workspace.

    Attributes:
        p: Magnet center position in world coordinates [m].
        alpha: Tilt angle of the rotation about +y [rad].
        beta: Tilt angle of the rotation about +x [rad].
        dipole_magnitude: Dipole moment magnitude |m| [A·m²], > 0.
        polarity: +1 for the moment along the body axis, -1 for opposed.
    """

    p: tuple[float, float, float]
    alpha: float = 0.0
    beta: float = 0.0
    dipole_magnitude: float = 1.0
    polarity: int = 1

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.shape != (3,):
            raise ValueError("agent position must be a 3-vector")
        if not self.dipole_magnitude > 0.0:
            raise ValueError("dipole_magnitude must be strictly positive")
        if self.polarity not in (1, -1):
            raise ValueError("polarity must be +1 or -1")
        object.__setattr__(self, "p", tuple(float(c) for c in p))

    @property
    def rotation(self) -> NDArray[np.floating]:
        """World-to-body rotation R with v_body = R @ v_world."""
        return self.rotation_t.T

    @property
    def rotation_t(self) -> NDArray[np.floating]:
        """Body-to-world rotation R^T = Ry(alpha) @ Rx(beta)."""
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        cb, sb = math.cos(self.beta), math.sin(self.beta)
        return np.array(
            [
                [ca, sa * sb, sa * cb],
                [0.0, cb, -sb],
                [-sa, ca * sb, ca * cb],
            ]
        )

    @property
    def axis(self) -> NDArray[np.floating]:
        """Unit body axis in world coordinates (the body z-axis)."""
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        cb, sb = math.cos(self.beta), math.sin(self.beta)
        return np.array([sa * cb, -sb, ca * cb])

    @property
    def moment(self) -> NDArray[np.floating]:
        """Dipole moment vector in world coordinates [A·m²]."""
        return self.polarity * self.dipole_magnitude * self.axis


def moment_field_map(moment: NDArray[np.floating]) -> NDArray[np.floating]:
    """Torque-from-field map: tau = skew(m) @ b."""
    return skew(np.asarray(moment, dtype=float))


def moment_gradient_map(moment: NDArray[np.floating]) -> NDArray[np.floating]:
    """Force-from-gradient map (3x5): f = M_g(m) @ g.

    Acting on the packed gradient (db_x/dx, db_x/dy, db_x/dz, db_y/dy,
    db_y/dz), this reproduces f = (m · grad) b for any symmetric traceless
    gradient.
    """
    mx, my, mz = np.asarray(moment, dtype=float)
    return np.array(
        [
            [mx, my, mz, 0.0, 0.0],
            [0.0, mx, 0.0, my, mz],
            [-mz, 0.0, mx, -mz, my],
        ]
    )


@dataclass(frozen=True)
class WrenchMaps:
    """Linear maps from field/gradient to torque and force on one agent.

    Attributes:
        m_b: (3,3) torque-from-field map skew(m).
        m_g: (3,5) force-from-packed-gradient map.
        jac_tilde: (3,3) lever-arm map sending force to pivot torque.
        jac: (3,6) combined map [I | jac_tilde] acting on stacked [tau; f].
    """

    m_b: NDArray[np.floating]
    m_g: NDArray[np.floating]
    jac_tilde: NDArray[np.floating]
    jac: NDArray[np.floating]

    @property
    def stacked(self) -> NDArray[np.floating]:
        """Block-diagonal wrench map (6x8): [b; g] -> [tau; f]."""
        out = np.zeros((6, 8))
        out[0:3, 0:3] = self.m_b
        out[3:6, 3:8] = self.m_g
        return out


def wrench_maps(agent: DipoleAgent, magnet_offset: float) -> WrenchMaps:
    """Build the wrench maps of a pivoted agent.

    Args:
        agent: Pivoted dipole (supplies orientation and moment).
        magnet_offset: Distance from the pivot to the magnet center [m].

    Returns:
        WrenchMaps in world coordinates.  The lever arm uses the geometric
        body axis, so it is independent of magnetic polarity.
    """
    m = agent.moment
    jac_tilde = magnet_offset * skew(agent.axis)
    jac = np.hstack([np.eye(3), jac_tilde])
    return WrenchMaps(
        m_b=moment_field_map(m),
        m_g=moment_gradient_map(m),
        jac_tilde=jac_tilde,
        jac=jac,
    )


def torque_map_svd(
    agent: DipoleAgent,
) -> tuple[NDArray[np.floating], NDArray[np.floating], NDArray[np.floating]]:
    """Closed-form SVD of the torque-from-field map skew(m).

    Returns:
        (U, s, Vt) with skew(m) = U @ diag(s) @ Vt, s = (|m|, |m|, 0).
        The null direction of the map (last row of Vt) is the dipole axis:
        fields parallel to the moment produce no torque.
    """
    mag = agent.dipole_magnitude
    rt = agent.rotation_t
    u = float(agent.polarity) * rt @ _BODY_U
    s = np.array([mag, mag, 0.0])
    vt = rt.T
    return u, s, vt


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

#: Moment-per-ampere of the octomag8 preset, calibrated so that the stacked
#: task [65 mT along +z; zero gradient] at the workspace center costs 15 A
#: in the infinity norm.
_OCTOMAG8_MOMENT_PER_AMPERE = 53.33931497882237

#: Moment-per-ampere of the navion3 preset, calibrated so that a 25 mT axial
#: field at 10 cm stand-off from the coil plane costs 25 A.
_NAVION3_MOMENT_PER_AMPERE = 10.803484520180415


def octomag8() -> ActuationModel:
    """Eight-coil hemispherical array around a central workspace.

    Two interleaved four-coil cones below the workspace, all axes pointing at
    the center.  Eight coils make the full stacked field/gradient response
    controllable at the center.
    """
    radius = 0.20
    coils = []
    for polar_deg, azimuths in ((30.0, (0, 90, 180, 270)), (75.0, (45, 135, 225, 315))):
        theta = math.radians(polar_deg)
        for az_deg in azimuths:
            phi = math.radians(az_deg)
            direction = np.array(
                [
                    math.sin(theta) * math.cos(phi),
                    math.sin(theta) * math.sin(phi),
                    -math.cos(theta),
                ]
            )
            position = radius * direction
            coils.append(
                CoilSpec(
                    position=tuple(position),
                    axis=tuple(-direction),
                    moment_per_ampere=_OCTOMAG8_MOMENT_PER_AMPERE,
                )
            )
    return ActuationModel(name="octomag8", coils=tuple(coils))


def navion3() -> ActuationModel:
    """Three parallel coils in a triangle, workspace along their common axis.

    Coil centers sit in the z = 0 plane, 15 cm apart (triangle side), with
    all axes along +z; the stand-off axis is +z.
    """
    side = 0.15
    circumradius = side / math.sqrt(3.0)
    coils = []
    for az_deg in (90.0, 210.0, 330.0):
        phi = math.radians(az_deg)
        coils.append(
            CoilSpec(
                position=(
                    circumradius * math.cos(phi),
                    circumradius * math.sin(phi),
                    0.0,
                ),
                axis=(0.0, 0.0, 1.0),
                moment_per_ampere=_NAVION3_MOMENT_PER_AMPERE,
            )
        )
    return ActuationModel(name="navion3", coils=tuple(coils))


_PRESETS = {"octomag8": octomag8, "navion3": navion3}


def get_model(name: str) -> ActuationModel:
    """Look up a preset actuation model by name."""
    try:
        return _PRESETS[name]()
    except KeyError:
        raise KeyError(
            f"unknown model '{name}'; available presets: {sorted(_PRESETS)}"
        ) from None

"""
Differentiable design functions: parameters phi plus static geometry alpha to the
particles of the design (tool, rotors or heightfield) and the initial scene state.

Every map is linear in (cos, sin, tanh) of phi followed by a constant interpolation
matrix from joints or field nodes to particles, so gradients flow to phi exactly.
"""
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Union

import numpy as np

from invdes_cli.autodiff import Tensor, ops
from invdes_cli.errors import ConfigError
from invdes_cli.physics.geometry import fluid_block, points_per_segment
from invdes_cli.physics.state_graph import DESIGN, FLUID, FLOOR_HEIGHT, HISTORY, ParticleState

RELATIVE_JOINTS = "relative-joints"
ABSOLUTE_JOINTS = "absolute-joints"
ROTOR_GRID = "rotor-grid"
HEIGHTFIELD = "heightfield"
HEIGHTFIELD_CONTROL_POINTS = "heightfield-control-points"
DESIGN_KINDS = (RELATIVE_JOINTS, ABSOLUTE_JOINTS, ROTOR_GRID, HEIGHTFIELD, HEIGHTFIELD_CONTROL_POINTS)

TOOL_SPACING = 0.015
FLUID_SPACING = 0.02
GAMMA_H = 0.3


@dataclass(frozen=True)
class SceneTemplate:
    """Fixed initial conditions: where the fluid starts and how the scene ends."""
    fluid_box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    num_steps: int = 50
    jitter_seed: int = 0
    fluid_spacing: float = FLUID_SPACING
    remove_at_floor: bool = False
    floor_height: float = FLOOR_HEIGHT

    def __post_init__(self):
        x0, y0, x1, y1 = self.fluid_box
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ConfigError(f"fluid box {self.fluid_box} must be a non-degenerate box inside the unit square")
        if self.num_steps < 0:
            raise ConfigError("num_steps must be non-negative")

    def to_dict(self) -> dict:
        return {
            "fluid_box": list(self.fluid_box),
            "num_steps": self.num_steps,
            "jitter_seed": self.jitter_seed,
            "fluid_spacing": self.fluid_spacing,
            "remove_at_floor": self.remove_at_floor,
            "floor_height": self.floor_height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneTemplate":
        data = dict(data)
        data["fluid_box"] = tuple(data["fluid_box"])
        return cls(**data)


@dataclass(frozen=True)
class DesignParams:
    """phi plus the kind tag and static geometry that turn it into particles."""
    kind: str
    phi: np.ndarray
    alpha: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ConfigError(f"unknown design kind '{self.kind}'")
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64).reshape(-1))
        expected = design_arity(self.kind, self.alpha)
        if self.phi.size != expected:
            raise ConfigError(f"{self.kind} expects {expected} parameters, got {self.phi.size}")

    def with_phi(self, phi: np.ndarray) -> "DesignParams":
        return DesignParams(self.kind, np.asarray(phi, dtype=np.float64).copy(), self.alpha)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "phi": self.phi.tolist(), "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data: dict) -> "DesignParams":
        return cls(kind=data["kind"], phi=np.asarray(data["phi"], dtype=np.float64), alpha=dict(data.get("alpha", {})))


@dataclass(frozen=True)
class DesignGeometry:
    particles: Tensor  # P x 2 design particles
    segments: np.ndarray  # straight pieces (x0, y0, x1, y1) for the oracle
    field: Optional[Tensor] = None  # heightfield parameters before tanh


def design_arity(kind: str, alpha: dict[str, Any]) -> int:
    if kind in (RELATIVE_JOINTS, ABSOLUTE_JOINTS):
        return int(alpha["num_joints"]) + (2 if alpha.get("global_offset") else 0)
    if kind == ROTOR_GRID:
        return int(alpha["grid"]) ** 2
    if kind == HEIGHTFIELD:
        return int(alpha["num_nodes"])
    if kind == HEIGHTFIELD_CONTROL_POINTS:
        return int(alpha["control_points"])
    raise ConfigError(f"unknown design kind '{kind}'")


def polyline_interpolation(segment_lengths: np.ndarray, spacing: float) -> np.ndarray:
    """
    Constant matrix mapping the J + 1 polyline vertices to evenly spaced particles.

    Shared vertices appear once; the last vertex closes the polyline.
    """
    rows = []
    j = len(segment_lengths)
    for k, length in enumerate(segment_lengths):
        count = points_per_segment(float(length), spacing)
        ts = np.linspace(0.0, 1.0, count)
        if k < j - 1:
            ts = ts[:-1]
        for t in ts:
            row = np.zeros(j + 1)
            row[k], row[k + 1] = 1.0 - t, t
            rows.append(row)
    return np.array(rows).reshape(-1, j + 1)


def _joints_from_angles(theta: Tensor, anchor, tool_length: float) -> Tensor:
    """(J + 1) x 2 joint positions; joint k = joint k-1 + seg (cos theta_k, sin theta_k)."""
    j = theta.shape[0]
    seg = tool_length / j
    prefix = np.tril(np.ones((j + 1, j)), k=-1)
    xs = ops.add(ops.matmul(prefix, ops.mul(ops.cos(theta), seg)), np.full(j + 1, float(anchor[0])))
    ys = ops.add(ops.matmul(prefix, ops.mul(ops.sin(theta), seg)), np.full(j + 1, float(anchor[1])))
    return ops.concat([ops.reshape(xs, (j + 1, 1)), ops.reshape(ys, (j + 1, 1))], axis=1)


def _offset_rows(points: Tensor, offset: Optional[Tensor]) -> Tensor:
    if offset is None:
        return points
    return ops.add(points, ops.broadcast_to(offset, points.shape))


def _tool_geometry(joints: Tensor, tool_length: float, spacing: float) -> DesignGeometry:
    j = joints.shape[0] - 1
    matrix = polyline_interpolation(np.full(j, tool_length / j), spacing)
    particles = ops.matmul(matrix, joints)
    v = joints.data
    segments = np.concatenate([v[:-1], v[1:]], axis=1)
    return DesignGeometry(particles=particles, segments=segments)


def tool_from_relative_angles(
        phi: Tensor,
        anchor=(0.15, 0.35),
        tool_length: float = 0.8,
        spacing: float = TOOL_SPACING,
        offset: Optional[Tensor] = None,
) -> DesignGeometry:
    """Joint angles accumulate: theta_k = theta_(k-1) + phi_k, starting horizontal along +x."""
    j = phi.shape[0]
    theta = ops.matmul(np.tril(np.ones((j, j))), phi)
    joints = _offset_rows(_joints_from_angles(theta, anchor, tool_length), offset)
    return _tool_geometry(joints, tool_length, spacing)


def tool_from_absolute_angles(
        phi: Tensor,
        anchor=(0.15, 0.35),
        tool_length: float = 0.8,
        spacing: float = TOOL_SPACING,
        offset: Optional[Tensor] = None,
) -> DesignGeometry:
    """theta_k = phi_k directly."""
    joints = _offset_rows(_joints_from_angles(phi, anchor, tool_length), offset)
    return _tool_geometry(joints, tool_length, spacing)


def rotor_centres(grid: int, box) -> np.ndarray:
    x0, y0, x1, y1 = box
    xs = x0 + (np.arange(grid) + 0.5) * (x1 - x0) / grid
    ys = y0 + (np.arange(grid) + 0.5) * (y1 - y0) / grid
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)


def rotor_grid(
        phi: Tensor,
        grid: int,
        box,
        rotor_length: float,
        spacing: float = TOOL_SPACING,
) -> DesignGeometry:
    """n x n rigid segments centred on an even grid over `box`, rotor k rotated by phi_k."""
    centres = rotor_centres(grid, box)
    count = points_per_segment(rotor_length, spacing)
    ts = np.tile(np.linspace(-0.5, 0.5, count) * rotor_length, grid * grid)
    owner = np.repeat(np.arange(grid * grid), count)
    cos_p = ops.gather(ops.cos(phi), owner)
    sin_p = ops.gather(ops.sin(phi), owner)
    xs = ops.add(ops.mul(cos_p, ts), centres[owner, 0])
    ys = ops.add(ops.mul(sin_p, ts), centres[owner, 1])
    particles = ops.concat([ops.reshape(xs, (owner.size, 1)), ops.reshape(ys, (owner.size, 1))], axis=1)

    half = 0.5 * rotor_length * np.stack([np.cos(phi.data), np.sin(phi.data)], axis=1)
    segments = np.concatenate([centres - half, centres + half], axis=1)
    return DesignGeometry(particles=particles, segments=segments)


def heightfield_offsets(phi: Tensor, gamma_h: float = GAMMA_H) -> Tensor:
    """y_i = gamma_H tanh(phi_i)."""
    return ops.mul(ops.tanh(phi), gamma_h)


def heightfield(
        phi: Tensor,
        x_range=(0.1, 0.9),
        base_height: float = 0.35,
        gamma_h: float = GAMMA_H,
        spacing: float = TOOL_SPACING,
) -> DesignGeometry:
    """M field nodes evenly spread over `x_range`, raised by the tanh design map and joined by a polyline."""
    m = phi.shape[0]
    xs = np.linspace(x_range[0], x_range[1], m)
    ys = ops.add(heightfield_offsets(phi, gamma_h), base_height)
    nodes = ops.concat([Tensor(xs.reshape(m, 1)), ops.reshape(ys, (m, 1))], axis=1)
    if m == 1:
        return DesignGeometry(particles=nodes, segments=np.zeros((0, 4)), field=phi)
    # particle count per piece follows the horizontal spacing so the matrix stays constant in phi
    matrix = polyline_interpolation(np.diff(xs), spacing)
    v = nodes.data
    segments = np.concatenate([v[:-1], v[1:]], axis=1)
    return DesignGeometry(particles=ops.matmul(matrix, nodes), segments=segments, field=phi)


def control_point_interpolation(control_points: int, num_nodes: int) -> np.ndarray:
    """num_nodes x control_points linear interpolation with both ends pinned."""
    if control_points == 1 or num_nodes == 1:
        return np.ones((num_nodes, control_points)) / control_points
    matrix = np.zeros((num_nodes, control_points))
    for i in range(num_nodes):
        u = i * (control_points - 1) / (num_nodes - 1)
        j = min(int(np.floor(u)), control_points - 2)
        w = u - j
        matrix[i, j] = 1.0 - w
        matrix[i, j + 1] = w
    return matrix


def heightfield_from_control_points(
        phi_ctrl: Tensor,
        num_nodes: int,
        x_range=(0.1, 0.9),
        base_height: float = 0.35,
        gamma_h: float = GAMMA_H,
        spacing: float = TOOL_SPACING,
) -> DesignGeometry:
    """Control values spread evenly, linearly interpolated onto the field nodes, then the tanh map."""
    field_params = ops.matmul(control_point_interpolation(phi_ctrl.shape[0], num_nodes), phi_ctrl)
    return heightfield(field_params, x_range, base_height, gamma_h, spacing)


def design_geometry(design: DesignParams, phi: Optional[Tensor] = None) -> DesignGeometry:
    """
    Dispatch on the design kind.

    Parameters:
        design (DesignParams): kind and static geometry; its phi is used unless `phi` is given.
        phi (Tensor): optional tape-attached parameters of the same length.
    """
    phi = phi if phi is not None else Tensor(design.phi)
    a = design.alpha
    spacing = float(a.get("spacing", TOOL_SPACING))
    if design.kind in (RELATIVE_JOINTS, ABSOLUTE_JOINTS):
        joints, offset = phi, None
        if a.get("global_offset"):
            n = int(a["num_joints"])
            joints, offset = phi[0:n], phi[n:n + 2]
        build = tool_from_relative_angles if design.kind == RELATIVE_JOINTS else tool_from_absolute_angles
        return build(joints, tuple(a["anchor"]), float(a["tool_length"]), spacing, offset)
    if design.kind == ROTOR_GRID:
        return rotor_grid(phi, int(a["grid"]), tuple(a["box"]), float(a["rotor_length"]), spacing)
    x_range = tuple(a.get("x_range", (0.1, 0.9)))
    base = float(a.get("base_height", 0.35))
    gamma_h = float(a.get("gamma_h", GAMMA_H))
    if design.kind == HEIGHTFIELD:
        return heightfield(phi, x_range, base, gamma_h, spacing)
    return heightfield_from_control_points(phi, int(a["num_nodes"]), x_range, base, gamma_h, spacing)


def initial_fluid(template: SceneTemplate) -> np.ndarray:
    rng = np.random.default_rng(template.jitter_seed)
    return fluid_block(template.fluid_box, template.fluid_spacing, rng)


def assemble_initial_state(
        design_particles: Optional[Union[Tensor, np.ndarray]],
        template: SceneTemplate,
        history: int = HISTORY,
) -> ParticleState:
    """Jittered fluid block (type 0) followed by the design particles (type 1), all at rest."""
    fluid = initial_fluid(template)
    if design_particles is None or design_particles.shape[0] == 0:
        positions, node_types = Tensor(fluid), np.full(fluid.shape[0], FLUID)
    else:
        positions = ops.concat([Tensor(fluid), design_particles], axis=0)
        node_types = np.concatenate([np.full(fluid.shape[0], FLUID), np.full(design_particles.shape[0], DESIGN)])
    state = ParticleState.at_rest(positions, node_types, history, template.remove_at_floor)
    return replace(state, floor_height=template.floor_height)


def apply_design(
        design: DesignParams,
        template: SceneTemplate,
        phi: Optional[Tensor] = None,
        history: int = HISTORY,
) -> tuple[ParticleState, DesignGeometry]:
    """f_D: initial scene state and design geometry for `design` (or the override `phi`)."""
    geometry = design_geometry(design, phi)
    return assemble_initial_state(geometry.particles, template, history), geometry

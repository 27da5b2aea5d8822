"""Planar rigid-body simulation of one convex object pushed by a disc-shaped pusher.

The object is a disc or a rectangle sliding on a flat table. The pusher is a
small kinematic disc (the push rod's cross-section) driven by a saturated
proportional servo. Contact is a penalty spring-damper along the normal plus a
velocity-proportional tangential term capped by Coulomb friction. Everything is
integrated with semi-implicit Euler at 1 ms per substep.

The inner loop is compiled with numba; the public functions below are thin
wrappers that convert the dataclasses into flat float arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

GRAVITY = 9.81
SUBSTEP_DT = 0.001
MIN_SUBSTEPS = 10
MAX_SUBSTEPS = 600


class SimulationInstabilityError(RuntimeError):
    """Raised when the contact penetration grows beyond what one substep can resolve."""


class ShapeKind(enum.IntEnum):
    DISC = 0
    RECTANGLE = 1


@dataclass(frozen=True)
class ShapeSpec:
    kind: ShapeKind
    radius: float = 0.0
    half_extents: tuple[float, float] = (0.0, 0.0)
    height: float = 0.05  # metadata only

    @classmethod
    def disc(cls, radius: float, height: float = 0.05) -> ShapeSpec:
        return cls(ShapeKind.DISC, radius=radius, height=height)

    @classmethod
    def rectangle(cls, length: float, width: float, height: float = 0.05) -> ShapeSpec:
        return cls(ShapeKind.RECTANGLE, half_extents=(0.5 * length, 0.5 * width), height=height)

    def __post_init__(self):
        if self.kind == ShapeKind.DISC and not self.radius > 0:
            raise ValueError(f"disc radius must be positive, got {self.radius}")
        if self.kind == ShapeKind.RECTANGLE and not min(self.half_extents) > 0:
            raise ValueError(f"rectangle half extents must be positive, got {self.half_extents}")
        if not self.height > 0:
            raise ValueError(f"height must be positive, got {self.height}")

    @property
    def effective_radius(self) -> float:
        """Lumped radius used to turn the torsional coefficient into angular deceleration."""
        if self.kind == ShapeKind.DISC:
            return self.radius
        return 0.5 * (self.half_extents[0] + self.half_extents[1])

    @property
    def bounding_radius(self) -> float:
        if self.kind == ShapeKind.DISC:
            return self.radius
        return math.hypot(*self.half_extents)

    def inertia(self, mass: float) -> float:
        if self.kind == ShapeKind.DISC:
            return 0.5 * mass * self.radius**2
        hx, hy = self.half_extents
        return mass * ((2 * hx) ** 2 + (2 * hy) ** 2) / 12.0

    def as_array(self) -> np.ndarray:
        if self.kind == ShapeKind.DISC:
            return np.array([0.0, self.radius, self.radius])
        return np.array([1.0, self.half_extents[0], self.half_extents[1]])


@dataclass(frozen=True)
class PhysParams:
    mass: float
    mu_k: float
    mu_t: float
    damping: float = 0.01
    mu_roll: float = 0.0001  # recorded only, objects never roll in 2D
    g: float = GRAVITY

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.mu_k < 0 or self.mu_t < 0:
            raise ValueError("friction coefficients must be non-negative")

    @property
    def sliding_friction_force(self) -> float:
        return self.mu_k * self.mass * self.g


@dataclass(frozen=True)
class BodyState:
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    vel: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([*self.pose, *self.vel], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> BodyState:
        return cls(pose=(float(a[0]), float(a[1]), float(a[2])), vel=(float(a[3]), float(a[4]), float(a[5])))

    @property
    def position(self) -> np.ndarray:
        return np.array(self.pose[:2])

    def kinetic_energy(self, mass: float, inertia: float) -> float:
        vx, vy, w = self.vel
        return 0.5 * mass * (vx * vx + vy * vy) + 0.5 * inertia * w * w


@dataclass(frozen=True)
class PusherState:
    pos: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.005
    max_speed: float = 0.3
    servo_gain: float = 20.0


@dataclass(frozen=True)
class WorldConfig:
    """Table and contact settings.

    Stiffness and damping coefficients are physical (N/m, N*s/m) but are capped
    per kilogram of object mass: no fixed stiffness is both stiff enough for a
    2.5 kg object and stable at 1 ms for a 0.5 g one.
    """

    table_bounds: tuple[float, float, float, float] = (-0.2, -0.2, 0.2, 0.2)
    dt_substep: float = SUBSTEP_DT
    contact_stiffness: float = 1.0e5
    contact_damping: float = 300.0
    tangential_damping: float = 100.0
    max_stiffness_per_kg: float = 4.0e5
    max_damping_per_kg: float = 400.0
    max_tangential_per_kg: float = 200.0
    mu_contact: float = 0.3
    max_penetration: float = 0.0002
    table_mu: float = 0.2

    def __post_init__(self):
        if self.dt_substep != SUBSTEP_DT:
            raise ValueError("dt_substep is fixed to the 1 ms control cycle")
        x0, y0, x1, y1 = self.table_bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate table bounds {self.table_bounds}")

    def contact_coefficients(self, mass: float) -> tuple[float, float, float]:
        return (
            min(self.contact_stiffness, self.max_stiffness_per_kg * mass),
            min(self.contact_damping, self.max_damping_per_kg * mass),
            min(self.tangential_damping, self.max_tangential_per_kg * mass),
        )

    @property
    def table_size(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.table_bounds
        return x1 - x0, y1 - y0

    @property
    def table_center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.table_bounds
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)


# ---------------------------------------------------------------------------
# compiled kernels (flat float arguments)
# ---------------------------------------------------------------------------

_TWO_PI = 2.0 * math.pi


@numba.njit(cache=True)
def _wrap_angle(theta):
    if -math.pi < theta <= math.pi:
        return theta
    t = (theta + math.pi) % _TWO_PI - math.pi
    if t <= -math.pi:
        t = math.pi
    return t


@numba.njit(cache=True)
def _servo(px, py, tx, ty, gain, max_speed):
    cx = gain * (tx - px)
    cy = gain * (ty - py)
    speed = math.sqrt(cx * cx + cy * cy)
    if speed > max_speed:
        s = max_speed / speed
        cx *= s
        cy *= s
    return cx, cy


@numba.njit(cache=True)
def _contact_geometry(ox, oy, th, kind, a, b, px, py, pr):
    """Return (penetration, nx, ny, qx, qy).

    n is the object's outward normal at the contact (pointing at the pusher),
    q the closest point on the object boundary. penetration > 0 means overlap.
    """
    dx = px - ox
    dy = py - oy
    if kind == 0:
        d = math.sqrt(dx * dx + dy * dy)
        if d > 1e-12:
            nx = dx / d
            ny = dy / d
        else:
            nx = 1.0
            ny = 0.0
        return pr - (d - a), nx, ny, ox + a * nx, oy + a * ny
    c = math.cos(th)
    s = math.sin(th)
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    inside = abs(lx) < a and abs(ly) < b
    if not inside:
        qx = min(max(lx, -a), a)
        qy = min(max(ly, -b), b)
        ex = lx - qx
        ey = ly - qy
        d = math.sqrt(ex * ex + ey * ey)
        if d > 1e-15:
            nlx = ex / d
            nly = ey / d
        elif abs(lx) >= a:
            nlx = 1.0 if lx >= 0 else -1.0
            nly = 0.0
        else:
            nlx = 0.0
            nly = 1.0 if ly >= 0 else -1.0
        sd = d
    else:
        gx = a - abs(lx)
        gy = b - abs(ly)
        if gx < gy:
            sgn = 1.0 if lx >= 0 else -1.0
            nlx = sgn
            nly = 0.0
            qx = sgn * a
            qy = ly
            sd = -gx
        else:
            sgn = 1.0 if ly >= 0 else -1.0
            nlx = 0.0
            nly = sgn
            qx = lx
            qy = sgn * b
            sd = -gy
    nx = c * nlx - s * nly
    ny = s * nlx + c * nly
    wx = ox + c * qx - s * qy
    wy = oy + s * qx + c * qy
    return pr - sd, nx, ny, wx, wy


@numba.njit(cache=True)
def _contact_force(obj, kind, a, b, px, py, pvx, pvy, pr, k, c, kt, mu_c):
    """Return (fx, fy, torque, qx, qy, penetration) acting on the object.

    k, c, kt are the mass-capped stiffness, normal damping and tangential damping.
    """
    pen, nx, ny, qx, qy = _contact_geometry(obj[0], obj[1], obj[2], kind, a, b, px, py, pr)
    if pen <= 0.0:
        return 0.0, 0.0, 0.0, qx, qy, pen
    rx = qx - obj[0]
    ry = qy - obj[1]
    vcx = obj[3] - obj[5] * ry
    vcy = obj[4] + obj[5] * rx
    relx = pvx - vcx
    rely = pvy - vcy
    approach = -(relx * nx + rely * ny)
    fn = k * pen + c * approach
    if fn < 0.0:
        fn = 0.0
    tx = -ny
    ty = nx
    ft = kt * (relx * tx + rely * ty)
    cap = mu_c * fn
    if ft > cap:
        ft = cap
    elif ft < -cap:
        ft = -cap
    fx = -fn * nx + ft * tx
    fy = -fn * ny + ft * ty
    return fx, fy, rx * fy - ry * fx, qx, qy, pen


@numba.njit(cache=True)
def _friction(obj, mu_k, mu_t, g, r_eff, dt):
    vx = obj[3]
    vy = obj[4]
    speed = math.sqrt(vx * vx + vy * vy)
    dec = mu_k * g * dt
    if speed <= dec:
        obj[3] = 0.0
        obj[4] = 0.0
    else:
        f = (speed - dec) / speed
        obj[3] = vx * f
        obj[4] = vy * f
    w = obj[5]
    dec_w = mu_t * g * dt / r_eff
    if abs(w) <= dec_w:
        obj[5] = 0.0
    elif w > 0:
        obj[5] = w - dec_w
    else:
        obj[5] = w + dec_w


@numba.njit(cache=True)
def _run_substeps(obj, pusher, tx, ty, n, shape, phys, cfg):
    """Advance obj (x,y,th,vx,vy,w) and pusher (x,y) in place.

    shape = (kind, a, b); phys = (mass, inertia, mu_k, mu_t, damping, g, r_eff);
    cfg = (x0, y0, x1, y1, dt, k, c, kt, mu_c, max_pen, pr, max_speed, gain,
           k_per_kg, c_per_kg, kt_per_kg).
    Returns the index of the failing substep, or -1.
    """
    kind = int(shape[0])
    a = shape[1]
    b = shape[2]
    mass = phys[0]
    inertia = phys[1]
    x0 = cfg[0]
    y0 = cfg[1]
    x1 = cfg[2]
    y1 = cfg[3]
    dt = cfg[4]
    pr = cfg[10]
    limit = 0.1 * pr
    k = min(cfg[5], cfg[13] * mass)
    c = min(cfg[6], cfg[14] * mass)
    kt = min(cfg[7], cfg[15] * mass)
    for i in range(n):
        # servo the pusher, then keep it from sinking deeper than max_pen
        cx, cy = _servo(pusher[0], pusher[1], tx, ty, cfg[12], cfg[11])
        nxp = pusher[0] + cx * dt
        nyp = pusher[1] + cy * dt
        pen, nx, ny, qx, qy = _contact_geometry(obj[0], obj[1], obj[2], kind, a, b, nxp, nyp, pr)
        if pen > cfg[9]:
            nxp += nx * (pen - cfg[9])
            nyp += ny * (pen - cfg[9])
        pvx = (nxp - pusher[0]) / dt
        pvy = (nyp - pusher[1]) / dt
        pusher[0] = nxp
        pusher[1] = nyp

        fx, fy, tq, qx, qy, pen = _contact_force(
            obj, kind, a, b, pusher[0], pusher[1], pvx, pvy, pr, k, c, kt, cfg[8]
        )
        if pen > limit:
            return i

        obj[3] += fx / mass * dt
        obj[4] += fy / mass * dt
        obj[5] += tq / inertia * dt
        _friction(obj, phys[2], phys[3], phys[5], phys[6], dt)
        keep = 1.0 - phys[4] * dt
        obj[3] *= keep
        obj[4] *= keep
        obj[5] *= keep
        obj[0] += obj[3] * dt
        obj[1] += obj[4] * dt
        obj[2] = _wrap_angle(obj[2] + obj[5] * dt)

        if obj[0] < x0:
            obj[0] = x0
            obj[3] = max(obj[3], 0.0)
        elif obj[0] > x1:
            obj[0] = x1
            obj[3] = min(obj[3], 0.0)
        if obj[1] < y0:
            obj[1] = y0
            obj[4] = max(obj[4], 0.0)
        elif obj[1] > y1:
            obj[1] = y1
            obj[4] = min(obj[4], 0.0)
    return -1


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _phys_array(shape: ShapeSpec, params: PhysParams) -> np.ndarray:
    return np.array(
        [
            params.mass,
            shape.inertia(params.mass),
            params.mu_k,
            params.mu_t,
            params.damping,
            params.g,
            shape.effective_radius,
        ]
    )


def _cfg_array(cfg: WorldConfig, pusher: PusherState) -> np.ndarray:
    return np.array(
        [
            *cfg.table_bounds,
            cfg.dt_substep,
            cfg.contact_stiffness,
            cfg.contact_damping,
            cfg.tangential_damping,
            cfg.mu_contact,
            cfg.max_penetration,
            pusher.radius,
            pusher.max_speed,
            pusher.servo_gain,
            cfg.max_stiffness_per_kg,
            cfg.max_damping_per_kg,
            cfg.max_tangential_per_kg,
        ]
    )


def pusher_servo(current: PusherState, target) -> np.ndarray:
    """Velocity command ``gain * (target - pos)`` saturated at ``max_speed``."""
    tx, ty = float(target[0]), float(target[1])
    if not (math.isfinite(tx) and math.isfinite(ty)):
        raise ValueError(f"servo target must be finite, got {target!r}")
    return np.array(_servo(current.pos[0], current.pos[1], tx, ty, current.servo_gain, current.max_speed))


def apply_friction(state: BodyState, params: PhysParams, dt: float, r_eff: float) -> BodyState:
    """Sliding and torsional friction for one time slice.

    Linear speed drops by ``min(speed, mu_k*g*dt)`` along the velocity
    direction; angular speed by ``mu_t*g*dt/r_eff``. Neither ever reverses.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    obj = state.as_array()
    _friction(obj, params.mu_k, params.mu_t, params.g, r_eff, dt)
    return BodyState.from_array(obj)


@dataclass(frozen=True)
class Contact:
    force: np.ndarray
    point: np.ndarray
    torque: float
    penetration: float


def resolve_contact(
    obj: BodyState,
    shape: ShapeSpec,
    mass: float,
    pusher: PusherState,
    cfg: WorldConfig,
    pusher_vel=(0.0, 0.0),
) -> Contact:
    """Penalty contact force on the object from the pusher.

    Raises SimulationInstabilityError when the overlap exceeds 10% of the
    pusher radius.
    """
    kind, a, b = shape.as_array()
    fx, fy, tq, qx, qy, pen = _contact_force(
        obj.as_array(),
        int(kind),
        a,
        b,
        pusher.pos[0],
        pusher.pos[1],
        float(pusher_vel[0]),
        float(pusher_vel[1]),
        pusher.radius,
        *cfg.contact_coefficients(mass),
        cfg.mu_contact,
    )
    if pen > 0.1 * pusher.radius:
        raise SimulationInstabilityError(
            f"penetration {pen:.6f} m exceeds 10% of pusher radius {pusher.radius} m"
        )
    return Contact(np.array([fx, fy]), np.array([qx, qy]), tq, pen)


def signed_distance(obj: BodyState, shape: ShapeSpec, point) -> float:
    """Signed distance from ``point`` to the object boundary (negative inside)."""
    kind, a, b = shape.as_array()
    pen, *_ = _contact_geometry(*obj.pose, int(kind), a, b, float(point[0]), float(point[1]), 0.0)
    return -pen


def step_substeps(
    obj: BodyState,
    shape: ShapeSpec,
    params: PhysParams,
    pusher: PusherState,
    servo_target,
    n: int,
    cfg: WorldConfig,
) -> tuple[BodyState, PusherState]:
    """Run ``n`` 1 ms substeps of servo, contact, integration, friction and table clamping."""
    if not (MIN_SUBSTEPS <= n <= MAX_SUBSTEPS) or int(n) != n:
        raise ValueError(f"substep count must be an integer in [{MIN_SUBSTEPS}, {MAX_SUBSTEPS}], got {n}")
    return advance(obj, shape, params, pusher, servo_target, int(n), cfg)


def advance(
    obj: BodyState,
    shape: ShapeSpec,
    params: PhysParams,
    pusher: PusherState,
    servo_target,
    n: int,
    cfg: WorldConfig,
) -> tuple[BodyState, PusherState]:
    """Same as ``step_substeps`` without the action-range check on ``n`` (any n >= 1)."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    state = obj.as_array()
    ppos = np.array(pusher.pos, dtype=np.float64)
    failed = _run_substeps(
        state,
        ppos,
        float(servo_target[0]),
        float(servo_target[1]),
        int(n),
        shape.as_array(),
        _phys_array(shape, params),
        _cfg_array(cfg, pusher),
    )
    if failed >= 0:
        raise SimulationInstabilityError(f"contact penetration exceeded 10% of the pusher radius at substep {failed}")
    return BodyState.from_array(state), replace(pusher, pos=(float(ppos[0]), float(ppos[1])))

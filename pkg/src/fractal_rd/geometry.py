"""Prefractal and reference domains as simple polygons, plus discretized
boundary measures attached to their edges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DomainParameterError, GeometryError, ResourceLimitError, SelfContactError

FRACTAL = "fractal-part"
SMOOTH = "smooth-part"
TAGS = (FRACTAL, SMOOTH)

MEASURE_KINDS = ("sigma", "hausdorff-d", "mixed", "dirichlet")

KOCH_GENERATION_CAP = 7
TREE_GENERATION_CAP = 10


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Similitude:
    """x -> translation + scale * R(angle) @ F @ x, with F the reflection
    across the first axis when ``reflect`` is set."""

    scale: float
    angle: float = 0.0
    reflect: bool = False
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.scale:
            raise DomainParameterError(f"similitude scale must be positive, got {self.scale}")

    @property
    def linear(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        if self.reflect:
            rot = rot @ np.array([[1.0, 0.0], [0.0, -1.0]])
        return self.scale * rot

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.linear.T + np.asarray(self.translation)

    def compose(self, other: "Similitude") -> "Similitude":
        """Return ``self o other``."""
        # R(a)F R(b)F = R(a - b); R(a)F R(b) = R(a - b)F
        if self.reflect:
            angle = self.angle - other.angle
        else:
            angle = self.angle + other.angle
        reflect = self.reflect != other.reflect
        translation = self(np.asarray(other.translation))
        return Similitude(self.scale * other.scale, angle, reflect, tuple(translation))


@dataclass(frozen=True)
class PrefractalPolygon:
    """Closed simple polygon; edge i joins vertex i to vertex i+1 (cyclic)."""

    vertices: np.ndarray
    tags: tuple[str, ...]
    generation: int
    dimension: float
    family: str
    addresses: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices))
        if len(self.tags) != len(self.vertices):
            raise GeometryError("one tag per edge is required")
        if not self.addresses:
            object.__setattr__(self, "addresses", ("",) * len(self.tags))
        bad = set(self.tags) - set(TAGS)
        if bad:
            raise GeometryError(f"unknown edge tags {sorted(bad)}")

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    def edge_vectors(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    def edge_lengths(self) -> np.ndarray:
        return np.hypot(*self.edge_vectors().T)

    def perimeter(self) -> float:
        return float(self.edge_lengths().sum())

    def signed_area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def fractal_mask(self) -> np.ndarray:
        return np.array([t == FRACTAL for t in self.tags])

    def first_crossing(self) -> tuple[int, int]:
        return tuple(int(i) for i in kernels.first_crossing(self.vertices))

    def is_simple(self) -> bool:
        return self.first_crossing() == (-1, -1)

    def scaled(self, factor: float) -> "PrefractalPolygon":
        return PrefractalPolygon(self.vertices * factor, self.tags, self.generation,
                                 self.dimension, self.family, self.addresses, dict(self.metadata))


def build_square(side: float = 1.0) -> PrefractalPolygon:
    if not side > 0:
        raise DomainParameterError(f"square side must be positive, got {side}")
    verts = side * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return PrefractalPolygon(verts, (SMOOTH,) * 4, 0, 1.0, "square",
                             metadata={"side": float(side)})


def build_koch(generation: int, side: float = 1.0, cap: int = KOCH_GENERATION_CAP) -> PrefractalPolygon:
    """Koch snowflake prefractal with 3 * 4**generation edges of length
    side / 3**generation, bumps pointing outward."""
    if generation < 0:
        raise DomainParameterError("generation must be >= 0")
    if generation > cap:
        raise ResourceLimitError(f"Koch generation {generation} exceeds cap {cap}")
    if not side > 0:
        raise DomainParameterError(f"side must be positive, got {side}")
    h = math.sqrt(3.0) / 2.0
    pts = side * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, h]])
    addresses = ["0", "1", "2"]
    c, s = 0.5, -h  # rotation by -60 degrees, outward for CCW traversal
    rot = np.array([[c, -s], [s, c]])
    for _ in range(generation):
        a = pts
        b = np.roll(pts, -1, axis=0)
        x = a + (b - a) / 3.0
        y = a + 2.0 * (b - a) / 3.0
        z = x + (y - x) @ rot.T
        pts = np.stack([a, x, z, y], axis=1).reshape(-1, 2)
        addresses = [adr + str(k) for adr in addresses for k in range(4)]
    return PrefractalPolygon(pts, (FRACTAL,) * len(pts), generation, math.log(4) / math.log(3),
                             "koch", tuple(addresses), {"side": float(side)})


def tree_similitudes(a: float, alpha: float, beta: float, theta: float) -> tuple[Similitude, Similitude]:
    f1 = Similitude(a, theta, False, (-alpha, beta))
    f2 = Similitude(a, -theta, False, (alpha, beta))
    return f1, f2


def check_tree_parameters(a, alpha, beta, theta):
    problems = []
    if not 0 < a < 1 / math.sqrt(2):
        problems.append("0 < a < 1/sqrt(2)")
    if not alpha > 0:
        problems.append("alpha > 0")
    if not beta > 0:
        problems.append("beta > 0")
    if not 0 < theta < math.pi / 2:
        problems.append("0 < theta < pi/2")
    if not a * math.cos(theta) < alpha:
        problems.append("a*cos(theta) < alpha")
    if not a * math.sin(theta) < beta:
        problems.append("a*sin(theta) < beta")
    if not (alpha - 1) * math.sin(theta) + beta * math.cos(theta) > 0:
        problems.append("(alpha-1)*sin(theta) + beta*cos(theta) > 0")
    if problems:
        raise DomainParameterError("tree parameters violate: " + "; ".join(problems))


def tree_cells(a, alpha, beta, theta, generation) -> list[tuple[str, np.ndarray]]:
    """All images f_sigma(K_0) for strings of length <= generation, as
    (string, hexagon vertices) pairs in breadth-first order."""
    f = dict(zip("12", tree_similitudes(a, alpha, beta, theta)))
    hexagon = base_hexagon(a, alpha, beta, theta)
    maps = [("", Similitude(1.0))]
    cells = []
    for depth in range(generation + 1):
        cells.extend((word, m(hexagon)) for word, m in maps)
        if depth < generation:
            maps = [(word + k, m.compose(f[k])) for word, m in maps for k in "12"]
    return cells


def base_hexagon(a, alpha, beta, theta) -> np.ndarray:
    f1, f2 = tree_similitudes(a, alpha, beta, theta)
    p1, p2 = np.array([-1.0, 0.0]), np.array([1.0, 0.0])
    return np.array([p1, p2, f2(p2), f2(p1), f1(p2), f1(p1)])


def _convex_overlap(P, Q, tol):
    for poly in (P, Q):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        pp = P @ normals.T
        qq = Q @ normals.T
        if np.any((pp.max(axis=0) <= qq.min(axis=0) + tol) | (qq.max(axis=0) <= pp.min(axis=0) + tol)):
            return False
    return True


def find_cell_overlap(cells, tol=1e-12):
    """First pair of tree cells whose interiors overlap, or None."""
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            P, Q = cells[i][1], cells[j][1]
            scale = max(np.ptp(P, axis=0).max(), np.ptp(Q, axis=0).max())
            if _convex_overlap(P, Q, tol * scale * scale):
                return cells[i][0], cells[j][0]
    return None


def build_tree(a: float, alpha: float, beta: float, theta: float, generation: int,
               cap: int = TREE_GENERATION_CAP) -> PrefractalPolygon:
    """Ramified tree prefractal: boundary of the union of the cells
    f_sigma(K_0) over strings of length <= generation.

    The top edges of the deepest cells are tagged fractal-part.
    """
    check_tree_parameters(a, alpha, beta, theta)
    if generation < 0:
        raise DomainParameterError("generation must be >= 0")
    if generation > cap:
        raise ResourceLimitError(f"tree generation {generation} exceeds cap {cap}")
    f = dict(zip("12", tree_similitudes(a, alpha, beta, theta)))
    p1, p2 = np.array([-1.0, 0.0]), np.array([1.0, 0.0])

    verts: list[np.ndarray] = []
    tags: list[str] = []
    addresses: list[str] = []

    # walk each cell from f_sigma(P2) to f_sigma(P1) counterclockwise
    def walk(word, m, depth):
        verts.append(m(p2))
        tags.append(SMOOTH)
        addresses.append("")
        for k in "21":
            child = m.compose(f[k])
            if depth < generation:
                walk(word + k, child, depth + 1)
            else:
                verts.append(child(p2))
                tags.append(FRACTAL)
                addresses.append(word + k)
            # side edge towards the next vertex of this cell
            verts.append(child(p1))
            tags.append(SMOOTH)
            addresses.append("")

    walk("", Similitude(1.0), 0)
    # left side of the root ends at P1; the closing edge P1 -> P2 is the base
    verts.append(p1)
    tags.append(SMOOTH)
    addresses.append("")
    poly = PrefractalPolygon(np.array(verts), tuple(tags), generation, -math.log(2) / math.log(a),
                             "tree", tuple(addresses),
                             {"a": a, "alpha": alpha, "beta": beta, "theta": theta})
    overlap = find_cell_overlap(tree_cells(a, alpha, beta, theta, generation))
    if overlap is not None:
        raise SelfContactError(f"tree cells {overlap[0] or '<root>'} and {overlap[1]} overlap")
    i, j = poly.first_crossing()
    if i >= 0:
        raise SelfContactError(f"tree boundary self-contact between edges {i} and {j}")
    return poly


def build_cusp(gamma: float, L: float = 1.0, l: float = 1.0, segments: int = 16,
               grading: float = 0.7) -> PrefractalPolygon:
    """Polygonal sampling of the planar cusp |x1| < sqrt(l) * x2**(1/gamma),
    0 < x2 < L, with samples graded geometrically toward the tip."""
    if not 0 < gamma < 1:
        raise DomainParameterError(f"cusp exponent gamma must lie in (0, 1), got {gamma}")
    if segments < 4:
        raise DomainParameterError(f"cusp needs at least 4 segments per side, got {segments}")
    if not (L > 0 and l > 0):
        raise DomainParameterError("cusp L and l must be positive")
    heights = L * grading ** np.arange(segments - 1, -1, -1.0)
    widths = math.sqrt(l) * heights ** (1.0 / gamma)
    right = np.stack([widths, heights], axis=1)
    left = np.stack([-widths, heights], axis=1)[::-1]
    verts = np.vstack([[0.0, 0.0], right, left])
    n = len(verts)
    q = (1.0 + gamma) / (1.0 - gamma)
    return PrefractalPolygon(verts, (SMOOTH,) * n, 0, 1.0, "cusp",
                             metadata={"gamma": gamma, "L": L, "l": l, "sobolev_q": q})


@dataclass(frozen=True)
class BoundaryMeasure:
    """Edge-wise discretization of a boundary measure on a polygon."""

    weights: np.ndarray
    edge_dirichlet: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "edge_dirichlet", _frozen(self.edge_dirichlet, bool))
        if np.any(self.weights < 0):
            raise ConfigError("measure weights must be nonnegative")

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def node_dirichlet(self) -> np.ndarray:
        """Vertex flags: vertex i is Dirichlet when edge i-1 or edge i is."""
        e = self.edge_dirichlet
        return e | np.roll(e, 1)


def attach_measure(poly: PrefractalPolygon, kind: str = "sigma", total_mass: float = 1.0, *,
                   normalize: bool = True, smooth_scale: float = 1.0,
                   fractal_dirichlet: bool = False) -> BoundaryMeasure:
    """Discretize a boundary measure on ``poly``.

    ``sigma`` uses arclength (``total_mass`` ignored). ``hausdorff-d``
    spreads ``total_mass`` over the fractal-part edges in proportion to
    length**d, so congruent generator pieces get equal mass; a polygon
    without fractal edges treats every edge as a piece. ``mixed`` combines
    that on fractal edges with ``smooth_scale`` times arclength elsewhere;
    with ``fractal_dirichlet`` the fractal part is made Dirichlet instead.
    ``dirichlet`` puts the whole boundary under a Dirichlet condition.
    """
    if kind not in MEASURE_KINDS:
        raise ConfigError(f"unknown measure kind {kind!r}; expected one of {', '.join(MEASURE_KINDS)}")
    lengths = poly.edge_lengths()
    n = poly.n_edges
    dirichlet = np.zeros(n, dtype=bool)
    if kind == "dirichlet":
        return BoundaryMeasure(np.zeros(n), np.ones(n, dtype=bool), kind)
    if kind == "sigma":
        return BoundaryMeasure(lengths.copy(), dirichlet, kind)
    if not total_mass > 0:
        raise ConfigError(f"total_mass must be positive for kind {kind!r}, got {total_mass}")
    fractal = poly.fractal_mask()
    pieces = fractal if fractal.any() or kind == "mixed" else np.ones(n, dtype=bool)
    raw = np.where(pieces, lengths ** poly.dimension, 0.0)
    if normalize and raw.sum() > 0:
        raw = raw * (total_mass / raw.sum())
    if kind == "hausdorff-d":
        return BoundaryMeasure(raw, dirichlet, kind)
    weights = np.where(fractal, raw, smooth_scale * lengths)
    if fractal_dirichlet:
        weights = np.where(fractal, 0.0, weights)
        dirichlet = fractal.copy()
    return BoundaryMeasure(weights, dirichlet, kind)

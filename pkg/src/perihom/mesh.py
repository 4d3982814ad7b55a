"""Rectangle meshing, boundary partitions, and boundary-layer bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IllPosed, NonconformingMeshSize

__all__ = [
    "DomainSpec", "BoundaryPartition", "Mesh", "DistanceField",
    "build_mesh", "distance_field", "layer_elements",
]

EDGE_NAMES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned rectangle with named edges."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (2,) or hi.shape != (2,):
            raise ValueError("corners must be 2D points")
        if not np.all(hi > lo):
            raise ValueError("side lengths must be strictly positive")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    @property
    def sides(self):
        return (self.upper[0] - self.lower[0], self.upper[1] - self.lower[1])

    @property
    def perimeter(self) -> float:
        return 2.0 * sum(self.sides)

    @property
    def area(self) -> float:
        return self.sides[0] * self.sides[1]


@dataclass(frozen=True)
class BoundaryPartition:
    """Whole-edge Dirichlet/Neumann split; D closed, N the open complement."""

    dirichlet_edges: frozenset
    pure_neumann: bool = False

    def __post_init__(self):
        edges = frozenset(self.dirichlet_edges)
        unknown = edges - set(EDGE_NAMES)
        if unknown:
            raise ValueError(f"unknown edge names {sorted(unknown)}")
        if not edges and not self.pure_neumann:
            raise IllPosed("empty Dirichlet set requires the pure-Neumann flag")
        if edges and self.pure_neumann:
            raise ValueError("pure-Neumann partition cannot carry Dirichlet edges")
        object.__setattr__(self, "dirichlet_edges", edges)

    @property
    def neumann_edges(self):
        return frozenset(EDGE_NAMES) - self.dirichlet_edges


@dataclass(frozen=True)
class Mesh:
    """Uniform quadrilateral grid over a rectangle.

    Nodes are ordered lexicographically (x fastest); ``conn[e]`` lists the
    four corner nodes of element e counter-clockwise from the lower-left.
    Boundary tags: 0 interior, 1 Dirichlet, 2 Neumann.
    """

    domain: DomainSpec
    partition: BoundaryPartition
    h: float
    nx: int  # elements along x
    ny: int  # elements along y
    nodes: np.ndarray = field(repr=False)        # (n_nodes, 2)
    conn: np.ndarray = field(repr=False)         # (n_elems, 4)
    node_tags: np.ndarray = field(repr=False)    # (n_nodes,)
    edge_of_node: dict = field(repr=False)       # edge name -> node index array

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elems(self) -> int:
        return self.conn.shape[0]

    @property
    def shape_nodes(self):
        return (self.nx + 1, self.ny + 1)

    def node_grid(self, values: np.ndarray) -> np.ndarray:
        """View nodal data as an (nx+1, ny+1, ...) grid, x index first."""
        return values.reshape((self.ny + 1, self.nx + 1) + values.shape[1:]).swapaxes(0, 1)

    def centroids(self) -> np.ndarray:
        return 0.25 * (self.nodes[self.conn[:, 0]] + self.nodes[self.conn[:, 1]]
                       + self.nodes[self.conn[:, 2]] + self.nodes[self.conn[:, 3]])

    def dirichlet_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_tags == 1)


def build_mesh(domain: DomainSpec, h: float, partition: BoundaryPartition) -> Mesh:
    """Mesh the rectangle with squares of side h; h must divide both sides."""
    if h <= 0.0:
        raise NonconformingMeshSize("mesh size must be positive")
    counts = []
    for length in domain.sides:
        ratio = length / h
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise NonconformingMeshSize(
                f"side length {length} is not an integer multiple of h = {h}"
            )
        counts.append(n)
    nx, ny = counts

    xs = domain.lower[0] + h * np.arange(nx + 1)
    ys = domain.lower[1] + h * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row-major: y varies along axis 0
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
    ll = ey.ravel() * (nx + 1) + ex.ravel()
    conn = np.column_stack([ll, ll + 1, ll + nx + 2, ll + nx + 1]).astype(np.int64)

    ix = np.tile(np.arange(nx + 1), ny + 1)
    iy = np.repeat(np.arange(ny + 1), nx + 1)
    on_edge = {
        "left": ix == 0,
        "right": ix == nx,
        "bottom": iy == 0,
        "top": iy == ny,
    }
    edge_of_node = {name: np.flatnonzero(mask) for name, mask in on_edge.items()}

    tags = np.zeros(nodes.shape[0], dtype=np.int8)
    on_boundary = on_edge["left"] | on_edge["right"] | on_edge["bottom"] | on_edge["top"]
    tags[on_boundary] = 2
    # D is closed: corner nodes shared with a Dirichlet edge become Dirichlet.
    for name in partition.dirichlet_edges:
        tags[on_edge[name]] = 1

    return Mesh(domain=domain, partition=partition, h=float(h), nx=nx, ny=ny,
                nodes=nodes, conn=conn, node_tags=tags, edge_of_node=edge_of_node)


@dataclass(frozen=True)
class DistanceField:
    """Exact nodal distance to the rectangle boundary."""

    delta: np.ndarray


def _rect_distance(points: np.ndarray, domain: DomainSpec) -> np.ndarray:
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    gaps = np.concatenate([points - lo, hi - points], axis=1)
    return np.min(gaps, axis=1)


def distance_field(mesh: Mesh) -> DistanceField:
    return DistanceField(delta=_rect_distance(mesh.nodes, mesh.domain))


def layer_elements(mesh: Mesh, width: float) -> np.ndarray:
    """Indices of elements whose centroid lies within `width` of the boundary."""
    if width <= 0.0:
        raise ValueError("layer width must be positive")
    dist = _rect_distance(mesh.centroids(), mesh.domain)
    return np.flatnonzero(dist < width)

"""Built-in test cases generated programmatically.

Each builder returns a :class:`Fixture` bundling a mesh, a material and a
load case. Meshes are structured so that results are reproducible bit for
bit across runs.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fem import LoadCase, Material
from .mesh import BoundaryRule, box, build_topology

__all__ = ["Fixture", "FIXTURES", "get_fixture", "structured_rectangle",
           "patch_test", "shear_pair", "cantilever_sensor", "plate_with_hole_quarter"]


@dataclass(frozen=True)
class Fixture:
    name: str
    mesh: object
    material: Material
    loads: LoadCase
    description: str = ""


def _grid_triangles(nx, ny, index, keep=None, alternate=True):
    """Split each cell of an ``nx`` by ``ny`` grid into two triangles.

    ``index(i, j)`` maps grid points to node numbers; ``keep(i, j)`` filters
    cells. With ``alternate`` the diagonal direction flips in a checkerboard.
    """
    tris = []
    for j in range(ny):
        for i in range(nx):
            if keep is not None and not keep(i, j):
                continue
            a, b = index(i, j), index(i + 1, j)
            c, d = index(i + 1, j + 1), index(i, j + 1)
            if alternate and (i + j) % 2:
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return np.array(tris, dtype=np.int64)


def structured_rectangle(x0, x1, y0, y1, nx, ny, keep=None, alternate=True):
    """Nodes and triangles of a structured grid, unused nodes dropped."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris = _grid_triangles(nx, ny, lambda i, j: j * (nx + 1) + i, keep, alternate)
    used = np.unique(tris)
    remap = np.full(len(nodes), -1)
    remap[used] = np.arange(len(used))
    return nodes[used], remap[tris]


def patch_test(n=4, young=1.0, poisson=0.3):
    """Unit square under uniaxial tension, exact at degree 1.

    Rollers on the left (``ux = 0``) and bottom (``uy = 0``), unit traction
    along +x on the right, free top. The exact stress is ``sxx = 1``.
    """
    nodes, tris = structured_rectangle(0.0, 1.0, 0.0, 1.0, n, n, alternate=False)
    rules = [
        BoundaryRule("left", "dirichlet", box(xmax=0.0), (0,)),
        BoundaryRule("bottom", "dirichlet", box(ymax=0.0), (1,)),
        BoundaryRule("right", "neumann", box(xmin=1.0)),
        BoundaryRule("top", "neumann", box(ymin=1.0)),
    ]
    mesh = build_topology(nodes, tris, rules)
    loads = LoadCase(tractions={"right": (1.0, 0.0)})
    return Fixture("patch_test", mesh, Material(young, poisson), loads,
                   "unit square, uniaxial tension with symmetry rollers")


def shear_pair(young=1.0, poisson=0.3, traction=(0.0, 1.0)):
    """Unit square of two triangles, clamped left edge, shear load on the right."""
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    rules = [
        BoundaryRule("left", "dirichlet", box(xmax=0.0)),
        BoundaryRule("right", "neumann", box(xmin=1.0)),
        BoundaryRule("free", "neumann"),
    ]
    mesh = build_topology(nodes, tris, rules)
    loads = LoadCase(tractions={"right": traction})
    return Fixture("shear_pair", mesh, Material(young, poisson), loads,
                   "two-triangle square, clamped left, shear traction on the right")


def cantilever_sensor(h=0.25, smooth=False, young=1.0, poisson=0.3):
    """Perforated cantilever standing in for a weight-sensor body.

    The plate ``[0, 6] x [0, 2]`` has two square openings
    ``[1.5, 2.5] x [0.5, 1.5]`` and ``[3.5, 4.5] x [0.5, 1.5]``. The right
    end is clamped. A downward unit traction acts on the top side over
    ``x <= 1``, or over the whole top side when ``smooth`` is set.
    ``h`` must divide 0.5.
    """
    ratio = 0.5 / h
    if h <= 0 or abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError("cantilever_sensor needs h = 0.5 / n")
    nx, ny = round(6.0 / h), round(2.0 / h)
    holes = [(1.5, 2.5, 0.5, 1.5), (3.5, 4.5, 0.5, 1.5)]

    def keep(i, j):
        xc, yc = (i + 0.5) * h, (j + 0.5) * h
        return not any(a < xc < b and c < yc < d for a, b, c, d in holes)

    nodes, tris = structured_rectangle(0.0, 6.0, 0.0, 2.0, nx, ny, keep=keep)
    x_load = 6.0 if smooth else 1.0
    rules = [
        BoundaryRule("clamp", "dirichlet", box(xmin=6.0)),
        BoundaryRule("load", "neumann", box(xmax=x_load, ymin=2.0)),
        BoundaryRule("free", "neumann"),
    ]
    mesh = build_topology(nodes, tris, rules)
    loads = LoadCase(tractions={"load": (0.0, -1.0)})
    return Fixture("cantilever_sensor", mesh, Material(young, poisson), loads,
                   "perforated cantilever, clamped right end, top load")


def plate_with_hole_quarter(nr=8, nt=16, grading=1.5, young=1.0, poisson=0.3):
    """Quarter of a plate with a circular hole under uniaxial tension.

    Region ``[0, 10] x [0, 7.5]`` minus the disk of radius 2.5 at the origin.
    Symmetry rollers on ``x = 0`` and ``y = 0``, unit traction along +x on
    ``x = 10``. Radial layers are graded towards the hole.
    """
    if nt % 2:
        raise ConfigError("nt must be even")
    R, W, H = 2.5, 10.0, 7.5
    corner = np.arctan2(H, W)
    t = np.linspace(0.0, 1.0, nt + 1)
    half = t <= 0.5
    ang = np.where(half, 2.0 * t * corner, corner + (2.0 * t - 1.0) * (0.5 * np.pi - corner))
    inner = R * np.column_stack([np.cos(ang), np.sin(ang)])
    outer = np.where(half[:, None],
                     np.column_stack([np.full_like(t, W), 2.0 * t * H]),
                     np.column_stack([W * (2.0 - 2.0 * t), np.full_like(t, H)]))
    s = np.linspace(0.0, 1.0, nr + 1) ** grading
    # node (k, j): radial layer k, angular station j
    nodes = (inner[None, :, :] * (1.0 - s)[:, None, None]
             + outer[None, :, :] * s[:, None, None]).reshape(-1, 2)
    tris = _grid_triangles(nr, nt, lambda k, j: k * (nt + 1) + j, alternate=True)
    # grid helper walks (i, j) = (radial, angular); fix orientation where needed
    x = nodes[tris]
    area = ((x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1])
            - (x[:, 1, 1] - x[:, 0, 1]) * (x[:, 2, 0] - x[:, 0, 0]))
    tris[area < 0] = tris[area < 0][:, ::-1]
    rules = [
        BoundaryRule("symmetry_x", "dirichlet", box(xmax=0.0), (0,)),
        BoundaryRule("symmetry_y", "dirichlet", box(ymax=0.0), (1,)),
        BoundaryRule("tension", "neumann", box(xmin=W)),
        BoundaryRule("free", "neumann"),
    ]
    mesh = build_topology(nodes, tris, rules)
    loads = LoadCase(tractions={"tension": (1.0, 0.0)})
    return Fixture("plate_with_hole_quarter", mesh, Material(young, poisson), loads,
                   "quarter plate with a circular hole, uniaxial tension")


FIXTURES = {
    "patch_test": patch_test,
    "cantilever_sensor": cantilever_sensor,
    "plate_with_hole_quarter": plate_with_hole_quarter,
    "shear_pair": shear_pair,
}


def get_fixture(name, **options):
    """Build a named fixture; ``options`` go to its builder."""
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise ConfigError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    try:
        return builder(**options)
    except TypeError as exc:
        raise ConfigError(f"fixture {name!r}: {exc}") from None

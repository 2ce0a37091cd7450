"""
Shared meshes and pencils. Module-scoped so the dense solves run once per file.
"""

import pytest

from assembly import assemble_operators, build_pencil
from geometry_mesh import Mesh, build_disk_mesh, trace_map

SQUARE_TEXT = """\
4 2 4
0 0
1 0
1 1
0 1
0 1 2
0 2 3
0
1
2
3
"""


@pytest.fixture(scope="session")
def disk4():
    mesh = build_disk_mesh(4)
    return mesh, trace_map(mesh)


@pytest.fixture(scope="session")
def disk8():
    mesh = build_disk_mesh(8)
    return mesh, trace_map(mesh)


@pytest.fixture(scope="session")
def disk16():
    mesh = build_disk_mesh(16)
    return mesh, trace_map(mesh)


@pytest.fixture(scope="session")
def unit_triangle():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]], [0, 1, 2])
    return mesh, trace_map(mesh)


def make_pencil(disk, k, l):
    mesh, trace = disk
    return build_pencil(mesh, trace, k, l, operators=assemble_operators(mesh, trace))

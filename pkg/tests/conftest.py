"""Shared fixtures: shipped mesh, a small synthetic fracture mesh, hierarchies."""
from importlib import resources

import numpy as np
import pytest

from fracmlmc.mesh import MeshHierarchy, load_coarse_mesh, parse_mesh_text


def shipped_mesh_path():
    return resources.files("fracmlmc").joinpath("data/coarse_mesh.txt")


@pytest.fixture(scope="session")
def coarse_mesh():
    return load_coarse_mesh(shipped_mesh_path())


@pytest.fixture(scope="session")
def hierarchy(coarse_mesh):
    return MeshHierarchy(coarse_mesh, max_level=2)


def make_mini_mesh_text(n: int = 4, fracture: bool = True) -> str:
    """Unit square, n x n quads, optional fracture along y = 0.5 from
    the interior point (0.5, 0.5) to the right boundary (1, 0.5)."""
    assert n % 2 == 0
    lines = ["VERTICES"]
    vid = lambda i, j: j * (n + 1) + i
    for j in range(n + 1):
        for i in range(n + 1):
            lines.append(f"{vid(i,j)} {i/n!r} {j/n!r}")
    lines.append("ELEMENTS")
    eid = 0
    for j in range(n):
        for i in range(n):
            lines.append(f"{eid} {vid(i,j)} {vid(i+1,j)} {vid(i+1,j+1)} {vid(i,j+1)}")
            eid += 1
    lines.append("FRACTURE_EDGES")
    if fracture:
        for i in range(n // 2, n):
            lines.append(f"{vid(i, n//2)} {vid(i+1, n//2)}")
    lines.append("BOUNDARY_EDGES")
    for j in range(n):
        lines.append(f"{vid(0,j)} {vid(0,j+1)} left")
        lines.append(f"{vid(n,j)} {vid(n,j+1)} right")
    for i in range(n):
        lines.append(f"{vid(i,0)} {vid(i+1,0)} bottom")
        lines.append(f"{vid(i,n)} {vid(i+1,n)} top")
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def mini_mesh():
    return parse_mesh_text(make_mini_mesh_text())


@pytest.fixture(scope="session")
def mini_hierarchy(mini_mesh):
    return MeshHierarchy(mini_mesh, max_level=2)

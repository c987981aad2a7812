"""
レガシーVTK (ASCII) の書き出し

状態の頂点値を UNSTRUCTURED_GRID の POINT_DATA として書き出します。
数値は '%.17g' で書くため、読み戻した値は元の倍精度値と一致します。
"""
from pathlib import Path
from typing import Dict, List, Mapping, TextIO, Union
import logging

import numpy as np

from visco_tumour.fem.mesh import TriMesh
from visco_tumour.fem.tensorcalc import eigh_symmetric
from visco_tumour.solver.state import FieldState

# ロガーの設定
logger = logging.getLogger(__name__)

NUMBER_FORMAT = "%.17g"

# VTKのセル型
VTK_TRIANGLE = 5
VTK_TETRA = 10


def _write_numbers(stream: TextIO, rows: np.ndarray) -> None:
    rows = np.atleast_2d(rows)
    for row in rows:
        stream.write(" ".join(NUMBER_FORMAT % value for value in row))
        stream.write("\n")


def _write_geometry(stream: TextIO, mesh: TriMesh, title: str) -> None:
    stream.write("# vtk DataFile Version 3.0\n")
    stream.write(f"{title}\n")
    stream.write("ASCII\n")
    stream.write("DATASET UNSTRUCTURED_GRID\n")
    points = np.zeros((mesh.num_vertices, 3))
    points[:, : mesh.dim] = mesh.vertices
    stream.write(f"POINTS {mesh.num_vertices} double\n")
    _write_numbers(stream, points)

    per_cell = mesh.dim + 1
    stream.write(f"CELLS {mesh.num_elements} {mesh.num_elements * (per_cell + 1)}\n")
    for simplex in mesh.simplices:
        stream.write(f"{per_cell} " + " ".join(str(int(v)) for v in simplex) + "\n")
    cell_type = VTK_TRIANGLE if mesh.dim == 2 else VTK_TETRA
    stream.write(f"CELL_TYPES {mesh.num_elements}\n")
    for _ in range(mesh.num_elements):
        stream.write(f"{cell_type}\n")


def _write_scalars(stream: TextIO, name: str, values: np.ndarray) -> None:
    stream.write(f"SCALARS {name} double 1\n")
    stream.write("LOOKUP_TABLE default\n")
    _write_numbers(stream, np.asarray(values, dtype=float).reshape(-1, 1))


def _write_vectors(stream: TextIO, name: str, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float)
    padded = np.zeros((values.shape[0], 3))
    padded[:, : values.shape[1]] = values
    stream.write(f"VECTORS {name} double\n")
    _write_numbers(stream, padded)


def point_data(state: FieldState) -> Dict[str, np.ndarray]:
    """書き出す頂点値 (名前 -> (Nv,) または (Nv, d))"""
    mesh = state.mesh
    dim = mesh.dim
    velocity = state.v.vertex_values()
    full = state.B.full()
    eigenvalues = eigh_symmetric(full)[0]
    data: Dict[str, np.ndarray] = {
        "phi": state.phi.values,
        "mu": state.mu.values,
        "sigma": state.sigma.values,
        "p": state.p.values,
        "v": velocity,
        "v_magnitude": np.linalg.norm(velocity, axis=1),
    }
    for i in range(dim):
        for j in range(i, dim):
            data[f"B_{i}{j}"] = full[:, i, j]
    for k in range(dim):
        data[f"B_eig{k}"] = eigenvalues[:, k]
    return data


def write_vtk(state: FieldState, path: Union[str, Path]) -> Path:
    """
    状態をレガシーVTK (ASCII) で書き出します。

    Args:
        state: 書き出す状態
        path: 出力ファイルのパス (親ディレクトリは作成されます)

    Returns:
        書き出したパス

    Raises:
        OSError: 書き込みに失敗した場合
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = state.mesh
    with path.open("w", encoding="ascii", newline="\n") as stream:
        _write_geometry(stream, mesh, f"visco-tumour state n={state.n} t={NUMBER_FORMAT % state.time}")
        stream.write(f"POINT_DATA {mesh.num_vertices}\n")
        for name, values in point_data(state).items():
            if np.ndim(values) == 2:
                _write_vectors(stream, name, values)
            else:
                _write_scalars(stream, name, values)
    logger.debug(f"Wrote VTK file {path}")
    return path


def write_mesh_vtk(mesh: TriMesh, path: Union[str, Path]) -> Path:
    """メッシュを要素ごとの細分化世代と要素径付きで書き出します。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="ascii", newline="\n") as stream:
        _write_geometry(stream, mesh, "visco-tumour mesh")
        stream.write(f"CELL_DATA {mesh.num_elements}\n")
        _write_scalars(stream, "level", mesh.level)
        _write_scalars(stream, "diameter", mesh.element_diameters)
    logger.debug(f"Wrote mesh VTK file {path}")
    return path


def read_vtk_data(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """
    write_vtk / write_mesh_vtk の出力から POINTS と各データ配列を読み戻します。

    Returns:
        "points", "cells" と SCALARS/VECTORS の名前をキーとする配列
    """
    lines: List[str] = Path(path).read_text(encoding="ascii").split("\n")
    result: Dict[str, np.ndarray] = {}
    index = 0

    def take_rows(count: int) -> np.ndarray:
        nonlocal index
        rows = [line.split() for line in lines[index:index + count]]
        index += count
        return np.asarray(rows, dtype=float)

    sizes: Mapping[str, int] = {}
    while index < len(lines):
        line = lines[index].split()
        index += 1
        if not line:
            continue
        keyword = line[0]
        if keyword == "POINTS":
            result["points"] = take_rows(int(line[1]))
        elif keyword == "CELLS":
            result["cells"] = take_rows(int(line[1]))[:, 1:].astype(int)
        elif keyword in ("POINT_DATA", "CELL_DATA"):
            sizes = {"count": int(line[1])}
        elif keyword == "SCALARS":
            index += 1  # LOOKUP_TABLE
            result[line[1]] = take_rows(sizes["count"])[:, 0]
        elif keyword == "VECTORS":
            result[line[1]] = take_rows(sizes["count"])
    return result

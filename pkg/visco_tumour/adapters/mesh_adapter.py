"""
メッシュアダプター

設定から初期メッシュを構成し、その情報を返します。
"""
from pathlib import Path
from typing import Any, Dict, Optional, Union
import logging
import math

import numpy as np

from visco_tumour.fem.mesh import DIRICHLET
from visco_tumour.model import tumour_initial_data
from visco_tumour.schemas.config import RunConfig
from visco_tumour.solver.engine import build_initial_mesh
from visco_tumour.utils.vtk_writer import write_mesh_vtk

# ロガーの設定
logger = logging.getLogger(__name__)


class MeshAdapter:
    """
    メッシュに対するアダプタークラス
    """

    @staticmethod
    def info(config: RunConfig, write_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """
        初期メッシュ (界面近傍の細分化を含む) の情報を取得します。

        Args:
            config: 実行設定
            write_path: メッシュをVTKで書き出すパス (省略可)

        Returns:
            頂点数・要素数・要素径の範囲・Dirichlet辺の数・最大内角など
        """
        params = config.model
        mesh = build_initial_mesh(config.mesh.to_policy(), tumour_initial_data(params.eps), params)
        max_angle = mesh.max_angle()
        levels, counts = np.unique(mesh.level, return_counts=True)
        info: Dict[str, Any] = {
            "preset": config.preset,
            "vertices": mesh.num_vertices,
            "elements": mesh.num_elements,
            "h_min": float(mesh.element_diameters.min()),
            "h_max": float(mesh.element_diameters.max()),
            "boundary_facets": int(mesh.boundary_facets.shape[0]),
            "dirichlet_facets": int(np.count_nonzero(mesh.facet_tags == DIRICHLET)),
            "max_angle_degrees": math.degrees(max_angle),
            "non_obtuse": bool(max_angle <= 0.5 * math.pi + 1e-12),
            "levels": {int(level): int(count) for level, count in zip(levels, counts)},
        }
        if write_path is not None:
            info["vtk"] = str(write_mesh_vtk(mesh, write_path))
        logger.info(
            f"Mesh: {info['vertices']} vertices, {info['elements']} triangles, "
            f"h in [{info['h_min']:.4g}, {info['h_max']:.4g}]"
        )
        return info

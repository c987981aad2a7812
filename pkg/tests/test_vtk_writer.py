"""
VTK出力のテスト
"""
from pathlib import Path
import tempfile
import unittest

import numpy as np

from visco_tumour.fem.mesh import BoundarySegment, build_structured, refine_near_interface
from visco_tumour.model import ModelParams, tumour_initial_data
from visco_tumour.solver.engine import initial_state
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.utils.vtk_writer import point_data, read_vtk_data, write_mesh_vtk, write_vtk


class TestVtkWriter(unittest.TestCase):
    """write_vtk と read_vtk_data のテスト"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        mesh = build_structured((-2.0, -2.0), (2.0, 2.0), 4, (BoundarySegment("xmin"),))
        params = ModelParams(eps=0.5)
        self.state = initial_state(SchemeOperators(mesh, params), tumour_initial_data(params.eps))

    def test_state_is_read_back_exactly(self):
        path = write_vtk(self.state, self.root / "nested" / "state_0000.vtk")
        self.assertTrue(path.exists())
        data = read_vtk_data(path)
        np.testing.assert_array_equal(data["points"][:, :2], self.state.mesh.vertices)
        np.testing.assert_array_equal(data["points"][:, 2], 0.0)
        np.testing.assert_array_equal(data["cells"], self.state.mesh.simplices)
        np.testing.assert_array_equal(data["phi"], self.state.phi.values)
        np.testing.assert_array_equal(data["mu"], self.state.mu.values)

    def test_tensor_and_velocity_fields(self):
        data = read_vtk_data(write_vtk(self.state, self.root / "state.vtk"))
        np.testing.assert_array_equal(data["B_00"], 1.0)
        np.testing.assert_array_equal(data["B_01"], 0.0)
        np.testing.assert_allclose(data["B_eig0"], 1.0)
        self.assertEqual(data["v"].shape, (self.state.mesh.num_vertices, 3))
        np.testing.assert_array_equal(data["v_magnitude"], 0.0)

    def test_point_data_names(self):
        names = set(point_data(self.state))
        self.assertTrue({"phi", "mu", "sigma", "p", "v", "B_00", "B_01", "B_11", "B_eig0", "B_eig1"} <= names)

    def test_mesh_file_carries_levels(self):
        mesh = self.state.mesh
        refined = refine_near_interface(mesh, self.state.phi.values, 0.5, 0.5)
        data = read_vtk_data(write_mesh_vtk(refined, self.root / "mesh.vtk"))
        np.testing.assert_array_equal(data["level"], refined.level)
        np.testing.assert_array_equal(data["diameter"], refined.element_diameters)
        self.assertEqual(len(data["cells"]), refined.num_elements)


if __name__ == "__main__":
    unittest.main()

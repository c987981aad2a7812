"""
JSON-RPCサーバーのテスト

process_request / process_batch_request を直接呼び出して、
メソッドのディスパッチとエラーコードの対応を確認します。
"""
import asyncio
import json
import unittest

from visco_tumour.server import app, process_batch_request, process_request
from visco_tumour.utils.errors import (
    INVALID_PARAMS,
    INVALID_REQUEST,
    METHOD_NOT_FOUND,
    PARSE_ERROR,
    PRESET_NOT_FOUND,
)

try:
    from fastapi.testclient import TestClient
except ImportError:  # httpx が無い環境
    TestClient = None


def call(method, params=None, id=1):
    request = {"jsonrpc": "2.0", "method": method, "id": id}
    if params is not None:
        request["params"] = params
    return asyncio.run(process_request(request))


class TestProcessRequest(unittest.TestCase):
    """単一リクエストの処理のテスト"""

    def test_presets(self):
        response = call("simulation.presets")
        self.assertEqual(response["id"], 1)
        names = [item["name"] for item in response["result"]]
        self.assertIn("example1_k0", names)
        self.assertIn("smoke_dissipative", names)

    def test_method_not_found(self):
        response = call("workbook.open")
        self.assertEqual(response["error"]["code"], METHOD_NOT_FOUND)

    def test_invalid_request(self):
        response = asyncio.run(process_request({"jsonrpc": "1.0", "method": "simulation.presets", "id": 7}))
        self.assertEqual(response["error"]["code"], INVALID_REQUEST)
        self.assertEqual(response["id"], 7)
        response = asyncio.run(process_request(["not", "an", "object"]))
        self.assertEqual(response["error"]["code"], INVALID_REQUEST)
        self.assertIsNone(response["id"])

    def test_notification_has_no_response(self):
        request = {"jsonrpc": "2.0", "method": "simulation.presets"}
        self.assertIsNone(asyncio.run(process_request(request)))

    def test_positional_params_are_rejected(self):
        response = call("check.run", ["norm_equivalence"])
        self.assertEqual(response["error"]["code"], INVALID_PARAMS)

    def test_invalid_params(self):
        response = call("check.run", {"names": ["norm_equivalence"], "scale": 2.0})
        self.assertEqual(response["error"]["code"], INVALID_PARAMS)
        self.assertIn("scale", response["error"]["message"])

    def test_unknown_preset(self):
        response = call("simulation.energy", {"preset": "example9"})
        self.assertEqual(response["error"]["code"], PRESET_NOT_FOUND)
        self.assertIn("available", response["error"]["data"])

    def test_check_run(self):
        response = call("check.run", {"names": ["norm_equivalence"], "seed": 2, "scale": 0.1})
        result = response["result"]
        self.assertTrue(result["passed"])
        self.assertEqual(result["seed"], 2)
        self.assertEqual(result["suites"][0]["name"], "norm_equivalence")

    def test_mesh_info(self):
        response = call("mesh.info", {"preset": "smoke_dissipative"})
        result = response["result"]
        self.assertEqual(result["vertices"], 289)
        self.assertEqual(result["elements"], 512)
        self.assertEqual(result["dirichlet_facets"], 16)
        self.assertEqual(result["boundary_facets"], 64)
        self.assertTrue(result["non_obtuse"])

    def test_energy(self):
        response = call("simulation.energy", {"preset": "smoke_dissipative", "overrides": {"mesh": {"n_coarse": 8}}})
        result = response["result"]
        self.assertEqual(result["vertices"], 81)
        self.assertGreater(result["energy"], 0.0)
        self.assertAlmostEqual(result["spd_margin"], 1.0, places=12)


class TestBatchRequest(unittest.TestCase):
    """バッチリクエストのテスト"""

    def test_batch_drops_notifications(self):
        batch = [
            {"jsonrpc": "2.0", "method": "simulation.presets", "id": "a"},
            {"jsonrpc": "2.0", "method": "simulation.presets"},
            {"jsonrpc": "2.0", "method": "nope", "id": "b"},
        ]
        responses = asyncio.run(process_batch_request(batch))
        self.assertEqual([response["id"] for response in responses], ["a", "b"])
        self.assertIn("result", responses[0])
        self.assertEqual(responses[1]["error"]["code"], METHOD_NOT_FOUND)


@unittest.skipIf(TestClient is None, "httpx is not installed")
class TestHttpEndpoint(unittest.TestCase):
    """HTTPエンドポイントのテスト"""

    def setUp(self):
        self.client = TestClient(app)

    def test_health(self):
        response = self.client.get("/health")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()["status"], "ok")

    def test_parse_error(self):
        response = self.client.post("/rpc", content=b"{not json", headers={"Content-Type": "application/json"})
        self.assertEqual(response.json()["error"]["code"], PARSE_ERROR)

    def test_notification_returns_no_content(self):
        response = self.client.post("/rpc", json={"jsonrpc": "2.0", "method": "simulation.presets"})
        self.assertEqual(response.status_code, 204)

    def test_empty_batch(self):
        response = self.client.post("/rpc", json=[])
        self.assertEqual(response.json()["error"]["code"], INVALID_REQUEST)

    def test_rpc_call(self):
        response = self.client.post("/rpc", json={"jsonrpc": "2.0", "method": "simulation.presets", "id": 3})
        body = json.loads(response.content)
        self.assertEqual(body["id"], 3)
        self.assertEqual(len(body["result"]), 8)


if __name__ == "__main__":
    unittest.main()

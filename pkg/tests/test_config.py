"""
設定読み込みのテスト

プリセット、TOMLファイル、上書き、環境変数の優先順位と検証エラーを確認します。
"""
from pathlib import Path
from unittest.mock import patch
import tempfile
import unittest

from visco_tumour.config import OUTPUT_DIR_ENV, build_config, deep_merge, load_config
from visco_tumour.utils.errors import ConfigurationError, PresetNotFoundError


class TestLoadConfig(unittest.TestCase):
    """load_config のテスト"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def _write(self, text: str) -> Path:
        path = self.root / "run.toml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_preset_values(self):
        config = load_config(preset="example1_k0")
        self.assertEqual(config.preset, "example1_k0")
        self.assertEqual(config.model.kappa_t, 0.0)
        self.assertEqual(config.model.T_end, 2.0)
        self.assertEqual(config.model.eps, 0.02)
        self.assertEqual(config.mesh.h_f, 0.111)
        self.assertEqual(config.output.stride, 40)

    def test_defaults_without_preset(self):
        with patch.dict("os.environ", {}, clear=True):
            config = load_config()
        self.assertIsNone(config.preset)
        self.assertEqual(config.mesh.n_coarse, 32)
        self.assertEqual(config.output.directory, Path("output"))
        self.assertEqual([segment.side for segment in config.mesh.dirichlet], ["xmin"])

    def test_file_overrides_preset(self):
        path = self._write(
            'preset = "example1_kp"\n'
            "[model]\n"
            "eps = 0.05\n"
            "[mesh]\n"
            "n_coarse = 8\n"
            "[[mesh.dirichlet]]\n"
            'side = "ymin"\n'
            "lower = -1.0\n"
            "upper = 1.0\n"
        )
        config = load_config(path)
        self.assertEqual(config.preset, "example1_kp")
        self.assertEqual(config.model.kappa_t, 0.5)
        self.assertEqual(config.model.eps, 0.05)
        self.assertEqual(config.mesh.n_coarse, 8)
        self.assertEqual(config.mesh.h_f, 0.111)
        policy = config.mesh.to_policy()
        self.assertEqual(policy.dirichlet[0].side, "ymin")
        self.assertEqual((policy.dirichlet[0].lower, policy.dirichlet[0].upper), (-1.0, 1.0))

    def test_argument_preset_beats_file_preset(self):
        path = self._write('preset = "example1_kp"\n')
        config = load_config(path, preset="example1_km")
        self.assertEqual(config.preset, "example1_km")
        self.assertEqual(config.model.kappa_t, -0.5)

    def test_overrides(self):
        config = load_config(preset="smoke_dissipative", overrides={"model": {"beta": 0.2}})
        self.assertEqual(config.model.beta, 0.2)
        self.assertEqual(config.model.P, 0.0)

    def test_output_directory_priority(self):
        with patch.dict("os.environ", {OUTPUT_DIR_ENV: str(self.root / "env")}):
            self.assertEqual(load_config().output.directory, self.root / "env")
            explicit = load_config(output_dir=self.root / "cli")
            self.assertEqual(explicit.output.directory, self.root / "cli")

    def test_invalid_value_names_the_key(self):
        with self.assertRaises(ConfigurationError) as context:
            load_config(overrides={"model": {"eps": -1.0}})
        self.assertIn("model.eps", str(context.exception))
        self.assertIn("model.eps", context.exception.data["keys"])

    def test_unknown_key_names_the_key(self):
        with self.assertRaises(ConfigurationError) as context:
            load_config(overrides={"model": {"foo": 1.0}})
        self.assertIn("model.foo", str(context.exception))

    def test_step_must_be_below_the_maximum(self):
        with self.assertRaises(ConfigurationError):
            load_config(overrides={"model": {"dt": 0.06}})

    def test_bad_toml(self):
        path = self._write("[model\neps = ")
        with self.assertRaises(ConfigurationError):
            load_config(path)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config(self.root / "missing.toml")

    def test_unknown_preset(self):
        with self.assertRaises(PresetNotFoundError) as context:
            load_config(preset="example9")
        self.assertIn("smoke_dissipative", context.exception.data["available"])

    def test_empty_dirichlet_list_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            build_config({"mesh": {"dirichlet": []}})


class TestDeepMerge(unittest.TestCase):
    """deep_merge のテスト"""

    def test_nested_merge_does_not_mutate(self):
        base = {"model": {"eps": 0.02, "beta": 0.1}, "seed": 0}
        merged = deep_merge(base, {"model": {"eps": 0.05}, "threads": 2})
        self.assertEqual(merged, {"model": {"eps": 0.05, "beta": 0.1}, "seed": 0, "threads": 2})
        self.assertEqual(base["model"]["eps"], 0.02)

    def test_non_mapping_replaces(self):
        merged = deep_merge({"mesh": {"h_f": 0.1}}, {"mesh": None})
        self.assertEqual(merged, {"mesh": None})


if __name__ == "__main__":
    unittest.main()

"""
実験プリセット

領域 [-5,5]²、左辺を速度のDirichlet境界とする2次元の実験を名前で定義します。
モデル定数は既定値のまま変えず、終了時刻と細分化の深さだけを机上規模に縮めています。
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List
import copy

from visco_tumour.utils.errors import PresetNotFoundError


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    overrides: Dict[str, Any] = field(default_factory=dict)

    def document(self) -> Dict[str, Any]:
        """設定文書として使えるネストした辞書 (コピー)"""
        return copy.deepcopy(self.overrides)


# 界面近傍を4回の二等分 (h ≈ 0.11) まで細分化する机上規模のメッシュ
_DESK_MESH = {"n_coarse": 32, "h_f": 0.111, "remesh_interval": 5, "coarsen_delay": 5}
_DESK_OUTPUT = {"stride": 40}


def _example(kappa_t: float, **model: Any) -> Dict[str, Any]:
    return {
        "model": {"T_end": 2.0, "kappa_t": kappa_t, **model},
        "mesh": dict(_DESK_MESH),
        "output": dict(_DESK_OUTPUT),
    }


PRESETS: Dict[str, Preset] = {
    preset.name: preset
    for preset in [
        Preset("example1_k0", "First example, kappa_t = 0", _example(0.0)),
        Preset("example1_kp", "First example, kappa_t = 0.5", _example(0.5)),
        Preset("example1_km", "First example, kappa_t = -0.5", _example(-0.5)),
        Preset(
            "example2_km2",
            "Second example without chemotaxis, stress growth G = 4, kappa_t = -2",
            _example(-2.0, chi_phi=0.0, G_stress=4.0),
        ),
        Preset(
            "example2_km1",
            "Second example without chemotaxis, stress growth G = 4, kappa_t = -1",
            _example(-1.0, chi_phi=0.0, G_stress=4.0),
        ),
        Preset(
            "example2_kp1",
            "Second example without chemotaxis, stress growth G = 4, kappa_t = 1",
            _example(1.0, chi_phi=0.0, G_stress=4.0),
        ),
        Preset(
            "smoke_dissipative",
            "Source-free, chemotaxis-free run on a 16x16 grid (50 steps) with a dissipative energy",
            {
                "model": {
                    "P": 0.0,
                    "chi_phi": 0.0,
                    "kappa_t": 0.0,
                    "T_end": 0.25,
                    "tol_nonlinear": 1e-9,
                },
                "mesh": {"n_coarse": 16, "h_f": None, "remesh_interval": 0},
                "output": {"stride": 10},
            },
        ),
        Preset(
            "chs_limit",
            "Fast relaxation (tau_bar = 1e-3, 100 steps): B stays close to the identity",
            {
                "model": {
                    "tau_bar": 1e-3,
                    "kappa_t": 0.0,
                    "G_stress": 0.0,
                    "T_end": 0.5,
                    "relaxation_stabilization": True,
                },
                "mesh": {"n_coarse": 16, "h_f": None, "remesh_interval": 0},
                "output": {"stride": 20},
            },
        ),
    ]
}


def preset_names() -> List[str]:
    return list(PRESETS)


def get_preset(name: str) -> Preset:
    """
    名前でプリセットを取得します。

    Raises:
        PresetNotFoundError: 未知の名前の場合
    """
    try:
        return PRESETS[name]
    except KeyError:
        raise PresetNotFoundError(
            f"Unknown preset '{name}', expected one of {preset_names()}",
            {"key": "preset", "available": preset_names()},
        ) from None

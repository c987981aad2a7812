"""
診断量のCSV出力

ステップごとに1行を追記し、実行が途中で失敗してもそれまでの行が残るようにします。
"""
from pathlib import Path
from typing import Union
import logging

import pandas as pd

from visco_tumour.diagnostics import CSV_COLUMNS, StepDiagnostics

# ロガーの設定
logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class DiagnosticsLog:
    """
    診断量CSVへの追記ログ

    Args:
        path: 出力ファイル (作成時にヘッダー行で上書きされます)
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.rows = 0
        self._last_time = float("-inf")
        pd.DataFrame(columns=list(CSV_COLUMNS)).to_csv(self.path, index=False, lineterminator="\n")

    def append(self, row: StepDiagnostics) -> None:
        """
        1行を追記します。

        Raises:
            ValueError: 時刻が単調増加でない場合
        """
        if not row.time > self._last_time:
            raise ValueError(f"Diagnostics time {row.time} does not increase (last {self._last_time})")
        frame = pd.DataFrame([row.csv_row()], columns=list(CSV_COLUMNS)).astype({"iters": "int64"})
        frame.to_csv(
            self.path,
            mode="a",
            header=False,
            index=False,
            float_format=FLOAT_FORMAT,
            lineterminator="\n",
        )
        self._last_time = row.time
        self.rows += 1

    def __call__(self, state, row: StepDiagnostics) -> None:
        self.append(row)


def read_diagnostics(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")

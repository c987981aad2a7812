"""
検証スイートアダプター
"""
from typing import Any, Dict, Iterable, Optional

from visco_tumour.verification import run_checks


class CheckAdapter:
    """
    性質検証スイートに対するアダプタークラス
    """

    @staticmethod
    def run(names: Optional[Iterable[str]] = None, seed: int = 0, scale: float = 1.0) -> Dict[str, Any]:
        """
        検証スイートを実行します。

        Returns:
            passed (全体の合否) と suites (スイートごとの結果)
        """
        results = run_checks(names, seed=seed, scale=scale)
        return {
            "passed": all(result.passed for result in results),
            "seed": seed,
            "suites": [result.to_dict() for result in results],
        }

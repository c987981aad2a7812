"""
visco-tumour メインエントリポイント

run / check / meshinfo / serve のサブコマンドを提供します。
数値計算モジュールは、スレッド数の環境変数を設定した後で読み込みます。
"""
from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import os
import sys
import tomllib

# 終了コード
EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def set_thread_count(threads: Optional[int]) -> None:
    """BLASとOpenMPのスレッド数を設定します (numpy の読み込み前に呼ぶ必要があります)。"""
    if threads is None:
        return
    for name in THREAD_VARIABLES:
        os.environ[name] = str(threads)


def parse_assignment(text: str) -> Dict[str, Any]:
    """
    'model.eps=0.01' を入れ子の辞書 {"model": {"eps": 0.01}} にします。

    値はTOMLの値として解釈し、解釈できない場合は文字列とします。

    Raises:
        argparse.ArgumentTypeError: '=' がない場合
    """
    key, separator, raw = text.partition("=")
    if not separator or not key.strip():
        raise argparse.ArgumentTypeError(f"Expected KEY=VALUE, got '{text}'")
    try:
        value = tomllib.loads(f"value = {raw.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    nested: Dict[str, Any] = {}
    cursor = nested
    parts = key.strip().split(".")
    for part in parts[:-1]:
        cursor = cursor.setdefault(part, {})
    cursor[parts[-1]] = value
    return nested


def configured_threads(args: argparse.Namespace) -> Optional[int]:
    """--threads、なければ設定ファイルの threads キー"""
    if args.threads is not None:
        return args.threads
    path = getattr(args, "config", None)
    if not path:
        return None
    try:
        with open(path, "rb") as handle:
            value = tomllib.load(handle).get("threads")
    except (OSError, tomllib.TOMLDecodeError):
        # load_config が改めて報告する
        return None
    return value if isinstance(value, int) else None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        default="INFO", help="Logging level")
    common.add_argument("--threads", type=int, default=None, help="Number of BLAS/OpenMP threads")

    config_source = argparse.ArgumentParser(add_help=False)
    config_source.add_argument("--preset", default=None, help="Preset name")
    config_source.add_argument("--config", default=None, help="TOML configuration file")
    config_source.add_argument("--set", dest="assignments", action="append", default=[],
                               type=parse_assignment, metavar="KEY=VALUE",
                               help="Override a configuration value, e.g. model.eps=0.01")

    parser = argparse.ArgumentParser(prog="visco-tumour", description="Viscoelastic tumour growth simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", parents=[common, config_source], help="Run a simulation")
    run_parser.add_argument("--out", default=None, help="Output directory")
    run_parser.add_argument("--max-steps", type=int, default=None, help="Stop after this many steps")

    check_parser = commands.add_parser("check", parents=[common], help="Run the property suites")
    check_parser.add_argument("--suite", dest="suites", action="append", default=None, help="Suite name")
    check_parser.add_argument("--config", default=None, help="TOML configuration file (its seed is used when --seed is absent)")
    check_parser.add_argument("--seed", type=int, default=None, help="Random seed")
    check_parser.add_argument("--scale", type=float, default=1.0, help="Sample count factor")

    mesh_parser = commands.add_parser("meshinfo", parents=[common, config_source], help="Describe the initial mesh")
    mesh_parser.add_argument("--write", default=None, help="Write the mesh as legacy VTK")

    serve_parser = commands.add_parser("serve", parents=[common], help="Start the JSON-RPC server")
    serve_parser.add_argument("--host", default="127.0.0.1", help="Host address to bind")
    serve_parser.add_argument("--port", type=int, default=8000, help="Port to bind")
    return parser


def _merged_overrides(assignments: List[Dict[str, Any]]) -> Dict[str, Any]:
    from visco_tumour.config import deep_merge

    merged: Dict[str, Any] = {}
    for assignment in assignments:
        merged = deep_merge(merged, assignment)
    return merged


def _run(args: argparse.Namespace) -> int:
    from visco_tumour.adapters.simulation_adapter import SimulationAdapter
    from visco_tumour.config import load_config
    from visco_tumour.utils.json_encoder import json_dumps

    config = load_config(args.config, preset=args.preset, overrides=_merged_overrides(args.assignments),
                         output_dir=args.out)
    result = SimulationAdapter.run(config, max_steps=args.max_steps, include_rows=False)
    print(json_dumps(result))
    return EXIT_OK


def _check(args: argparse.Namespace) -> int:
    from visco_tumour.adapters.check_adapter import CheckAdapter
    from visco_tumour.config import load_config
    from visco_tumour.utils.json_encoder import json_dumps

    seed = args.seed
    if seed is None:
        seed = load_config(args.config).seed if args.config else 0
    result = CheckAdapter.run(args.suites, seed=seed, scale=args.scale)
    print(json_dumps(result))
    return EXIT_OK if result["passed"] else EXIT_SOLVER_FAILURE


def _meshinfo(args: argparse.Namespace) -> int:
    from visco_tumour.adapters.mesh_adapter import MeshAdapter
    from visco_tumour.config import load_config
    from visco_tumour.utils.json_encoder import json_dumps

    config = load_config(args.config, preset=args.preset, overrides=_merged_overrides(args.assignments))
    print(json_dumps(MeshAdapter.info(config, args.write)))
    return EXIT_OK


def _serve(args: argparse.Namespace) -> int:
    from visco_tumour.server import start_server

    logging.getLogger("visco-tumour").info(f"Starting visco-tumour server on {args.host}:{args.port}")
    start_server(args.host, args.port)
    return EXIT_OK


COMMANDS = {"run": _run, "check": _check, "meshinfo": _meshinfo, "serve": _serve}


def exit_code_for(exception: BaseException) -> int:
    """例外を終了コードに対応付けます。"""
    from visco_tumour.utils.errors import (
        ConfigurationError,
        FieldError,
        LinearSolverError,
        MeshError,
        NonlinearConvergenceError,
        SpectralDomainError,
    )

    if isinstance(exception, (SpectralDomainError, LinearSolverError, NonlinearConvergenceError, FieldError)):
        return EXIT_SOLVER_FAILURE
    if isinstance(exception, (ConfigurationError, MeshError)):
        return EXIT_CONFIG_ERROR
    if isinstance(exception, OSError):
        return EXIT_IO_ERROR
    return EXIT_SOLVER_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    コマンドライン引数を解析し、サブコマンドを実行します。

    Returns:
        終了コード (0: 成功, 1: ソルバーの失敗, 2: 設定エラー, 3: 入出力エラー)
    """
    # ロガーの設定
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    logger = logging.getLogger("visco-tumour")

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG_ERROR

    # ログレベルの設定
    logging.getLogger().setLevel(getattr(logging, args.log_level))
    threads = configured_threads(args)
    if threads is not None and threads < 1:
        logger.error(f"Thread count must be positive, got {threads}")
        return EXIT_CONFIG_ERROR
    set_thread_count(threads)

    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed: {type(e).__name__}: {str(e)}")
        logger.debug("Traceback", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())

"""
visco-tumour adapters.

CLIとJSON-RPCメソッドが共有する計算へのインターフェースを提供します。
"""

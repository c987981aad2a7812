"""
visco-tumour methods

JSON-RPCメソッドの実装を提供します。
"""

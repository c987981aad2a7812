"""
visco-tumour solver

線形ソルバー、離散演算子、部分問題、時間発展エンジンを提供します。
"""

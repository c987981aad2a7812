"""
visco-tumour fem

メッシュ、積分則、有限要素空間、組み立て、対称行列の関数を提供します。
"""

"""
visco-tumour - 粘弾性相場腫瘍成長モデルの有限要素シミュレーター

Cahn-Hilliard / Stokes / Oldroyd-B / 栄養素の連成系を、正定値性を保つ
有限要素スキームで解きます。CLIとJSON-RPCサーバーから利用できます。
"""

__version__ = "0.1.0"

"""
visco-tumour テストパッケージ
"""

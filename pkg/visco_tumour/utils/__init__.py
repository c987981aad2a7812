"""
visco-tumour utils
"""

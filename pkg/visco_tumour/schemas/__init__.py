"""
visco-tumour schemas
"""

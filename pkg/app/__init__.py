"""
hjb-exec Application Package
"""

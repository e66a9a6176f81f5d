# Hierarchical reduced basis toolkit
__version__ = "1.0.0"

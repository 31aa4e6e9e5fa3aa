"""A2U Lab - Affinity-aware upsampling kernels and the reconstruction experiment built on them"""
__version__ = "1.0.0"

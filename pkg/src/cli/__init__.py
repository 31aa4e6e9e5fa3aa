"""A2U Lab command line - argparse surface, layered run config and gradient-check suites"""
from .config import DataPaths, RunConfig, build_run_config, deep_merge, load_config_file
from .gradcheck_suites import A2U_VARIANTS, TOLERANCE, GradCase, GradResult, GradScope, cases_for, run_cases
from .main import build_parser, main

__all__ = [
    "DataPaths",
    "RunConfig",
    "build_run_config",
    "deep_merge",
    "load_config_file",
    "A2U_VARIANTS",
    "TOLERANCE",
    "GradCase",
    "GradResult",
    "GradScope",
    "cases_for",
    "run_cases",
    "build_parser",
    "main",
]

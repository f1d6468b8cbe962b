"""Nonlinear Embedding Transform for unsupervised domain adaptation."""

from .data import DataError, LabeledDomain, PreprocessSpec, load_dataset, make_shifted_gaussians, preprocess
from .eigsolve import EigenSolution, EigenSolveError, generalized_eig_smallest
from .graph import build_adjacency, normalized_laplacian
from .kernel import KernelSpec, cross_kernel, kernel_matrix, median_bandwidth
from .kmm import KmmResult, kmm_weights, select_validation, solve_kmm_qp
from .mmd import build_m0, build_mc, build_mmd_set
from .modelsel import GridSpec, KmmConfig, SelectionReport, grid_search, validate_pipeline
from .net import HyperParams, NetFitError, NetModel, assemble_system, na_baseline, net_fit, nn_classify, project

__version__ = "0.1.0"

__all__ = [
    "DataError", "LabeledDomain", "PreprocessSpec", "load_dataset", "make_shifted_gaussians", "preprocess",
    "EigenSolution", "EigenSolveError", "generalized_eig_smallest",
    "build_adjacency", "normalized_laplacian",
    "KernelSpec", "cross_kernel", "kernel_matrix", "median_bandwidth",
    "KmmResult", "kmm_weights", "select_validation", "solve_kmm_qp",
    "build_m0", "build_mc", "build_mmd_set",
    "GridSpec", "KmmConfig", "SelectionReport", "grid_search", "validate_pipeline",
    "HyperParams", "NetFitError", "NetModel", "assemble_system", "na_baseline", "net_fit", "nn_classify", "project",
]

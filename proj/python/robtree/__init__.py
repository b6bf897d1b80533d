"""Robust optimal classification trees under integer and categorical covariate shifts."""

import json as _json

from . import _robtree
from ._robtree import (  # noqa: F401
    BackendError,
    Dataset,
    ResourceCapError,
    RhoMatrix,
    RobtreeError,
    Tree,
    UncertaintyModel,
    ValidationError,
    brute_force_adversary,
    budget_from_lambda,
    calibrate,
    calibrate_with_epsilon,
    constant_tree,
    find_r_one_sided,
    find_r_two_sided,
    gamma_binary,
    gamma_bounded,
    gamma_categorical,
    gamma_unbounded,
    load_dataset,
    load_tree,
    nominal_correct,
    parse_dataset,
    render_text,
    sample_perturbation,
    train_test_split,
    worst_case_value,
)

__version__ = "0.1.0"


def scipy_backend():
    """Main-problem backend that solves each master MILP with scipy/HiGHS."""
    from .milp import solve_json

    return solve_json


def _unpack(result):
    tree, blob, report = result
    return tree, blob, _json.loads(report)


def train(data, model, depth, backend="builtin-enum", R=1.0, strengthen=True, iteration_cap=10_000,
          time_cap=float("inf"), max_trees=5_000_000):
    """Robust cutting-plane training. Returns (tree, blob, report)."""
    return _unpack(_robtree.train(data, model, depth, backend, R, strengthen, iteration_cap, time_cap, max_trees))


def train_nonrobust(data, depth, R=1.0, backend="builtin-enum"):
    return _unpack(_robtree.train_nonrobust(data, depth, R, backend))


def train_exhaustive(data, model, depth, R=1.0):
    return _unpack(_robtree.train_exhaustive(data, model, depth, R))


def train_proxy(data, model, depth, budget_mode="shared"):
    return _unpack(_robtree.train_proxy(data, model, depth, budget_mode))


def worst_case(tree, data, model):
    """Exact adversarial certificate as a dict."""
    return _json.loads(_robtree.worst_case_correct(tree, data, model))


def evaluate(tree, test, rho, K=1000, seed=0, threads=1, rho_offset=0.0, rho_radius=0.0, baseline=None, model=None):
    return _json.loads(_robtree.evaluate(tree, test, rho, K, seed, threads, rho_offset, rho_radius, baseline, model))


def calibration_report(data, rho, model, lam=None):
    return _json.loads(_robtree.calibration_report(data, rho, model, lam))

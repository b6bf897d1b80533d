"""Exact MILP backend for the robtree main problem, built on scipy's HiGHS interface.

Reads the "robtree-milp" JSON model and returns the solution JSON the C++
side expects. Importable without the compiled extension.
"""

import json

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix


def solve_model(model):
    if model.get("format") != "robtree-milp" or model.get("version") != 1:
        raise ValueError("not a robtree-milp version 1 model")
    variables = model["variables"]
    n = len(variables)
    sign = -1.0 if model.get("sense", "max") == "max" else 1.0

    c = np.zeros(n)
    for idx, coef in model["objective"]["terms"]:
        c[idx] += sign * coef
    integrality = np.array([1 if v["type"] == "binary" else 0 for v in variables])
    bounds = Bounds([v["lb"] for v in variables], [v["ub"] for v in variables])

    rows, cols, vals, lo, hi = [], [], [], [], []
    for r, con in enumerate(model["constraints"]):
        for idx, coef in con["terms"]:
            rows.append(r)
            cols.append(idx)
            vals.append(coef)
        rhs = con["rhs"]
        sense = con["sense"]
        lo.append(rhs if sense in ("==", ">=") else -np.inf)
        hi.append(rhs if sense in ("==", "<=") else np.inf)
    constraints = []
    if model["constraints"]:
        A = coo_matrix((vals, (rows, cols)), shape=(len(model["constraints"]), n)).tocsr()
        constraints.append(LinearConstraint(A, lo, hi))

    res = milp(c, integrality=integrality, bounds=bounds, constraints=constraints,
               options={"mip_rel_gap": 0.0, "presolve": True})
    if res.status != 0 or res.x is None:
        return {"status": "infeasible" if res.status == 2 else "error", "message": res.message, "values": []}
    return {"status": "optimal", "values": [float(v) for v in res.x]}


def solve_json(model_json):
    """str -> str; usable directly as a robtree training callback."""
    return json.dumps(solve_model(json.loads(model_json)))


def main(argv):
    if len(argv) != 3:
        print("usage: robtree_milp.py MODEL.json SOLUTION.json")
        return 2
    with open(argv[1]) as f:
        model = json.load(f)
    solution = solve_model(model)
    with open(argv[2], "w") as f:
        json.dump(solution, f)
    return 0 if solution["status"] == "optimal" else 1

#!/usr/bin/env python3
"""External MIP solver for topcut, backed by scipy.optimize.milp.

Usage: milp_adapter.py PROBLEM.json RESULT.json
"""
import json
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix


def main(problem_path, result_path):
    with open(problem_path) as f:
        prob = json.load(f)
    n = prob["num_vars"]
    c = -np.asarray(prob["objective"], dtype=float)
    data, cols, ptr = [], [], [0]
    lo, hi = [], []
    for row in prob["rows"]:
        data.extend(row["coef"])
        cols.extend(row["idx"])
        ptr.append(len(data))
        rhs = row["rhs"]
        sense = row["sense"]
        lo.append(rhs if sense in (">=", "=") else -np.inf)
        hi.append(rhs if sense in ("<=", "=") else np.inf)
    constraints = []
    if prob["rows"]:
        a = csr_matrix((data, cols, ptr), shape=(len(prob["rows"]), n))
        constraints.append(LinearConstraint(a, lo, hi))
    options = {}
    if prob.get("time_limit") is not None:
        options["time_limit"] = max(prob["time_limit"], 0.01)
    res = milp(
        c,
        constraints=constraints,
        integrality=np.ones(n),
        bounds=Bounds(np.zeros(n), np.ones(n)),
        options=options,
    )
    out = {"status": "timeout", "upper_bound": None, "solution": None}
    if res.x is not None:
        out["solution"] = [int(round(v)) for v in res.x]
    bound = getattr(res, "mip_dual_bound", None)
    if res.status == 0:
        out["status"] = "optimal"
        out["upper_bound"] = -res.fun
    elif res.status == 2:
        out["status"] = "infeasible"
    else:
        out["status"] = "feasible" if res.x is not None else "timeout"
        if bound is not None and np.isfinite(bound):
            out["upper_bound"] = -bound
    with open(result_path, "w") as f:
        json.dump(out, f)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

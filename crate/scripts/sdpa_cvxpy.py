#!/usr/bin/env python3
"""External SDP backend: solve an SDPA sparse file with cvxpy.

Usage: sdpa_cvxpy.py [--solver NAME] input.dat-s output.json

The problem is read in the standard form  min <C, X>  s.t.  <A_j, X> = b_j,
X block-diagonal PSD (negative block sizes are diagonal, i.e. nonnegative
vectors), with F0 = -C and F_j = A_j as written by `rcbf export-sdpa`.
Writes {"status", "y", "x", "iterations", "objective"}.
"""

import argparse
import json
import re
import sys

import numpy as np
import scipy.sparse as sp
import cvxpy as cp


def read_sdpa(path):
    """Returns block sizes, rhs, the objective F0 and the constraint matrices
    F1..Fm as one sparse (m+1) x N matrix over the stacked, column-major
    vectorized blocks (diagonal blocks contribute their diagonal only)."""
    with open(path) as fh:
        lines = [l.strip() for l in fh]
    lines = [l for l in lines if l and not l.startswith(("*", '"'))]
    clean = lambda l: re.sub(r"[,{}()]", " ", l).split()
    m = int(clean(lines[0])[0])
    nb = int(clean(lines[1])[0])
    sizes = [int(s) for s in clean(lines[2])[:nb]]
    rhs = np.array([float(s) for s in clean(lines[3])[:m]])
    offsets = np.cumsum([0] + [n * n if n > 0 else -n for n in sizes])
    rows, cols, vals = [], [], []
    for l in lines[4:]:
        k, b, i, j, v = clean(l)[:5]
        k, b, i, j, v = int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(v)
        n = sizes[b]
        if n < 0:
            rows.append(k)
            cols.append(offsets[b] + i)
            vals.append(v)
            continue
        rows.append(k)
        cols.append(offsets[b] + j * n + i)
        vals.append(v)
        if i != j:
            rows.append(k)
            cols.append(offsets[b] + i * n + j)
            vals.append(v)
    mats = sp.csr_matrix((vals, (rows, cols)), shape=(m + 1, offsets[-1]))
    return sizes, rhs, mats, offsets


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--solver", default="CLARABEL")
    ap.add_argument("input")
    ap.add_argument("output")
    args = ap.parse_args()

    sizes, rhs, mats, offsets = read_sdpa(args.input)
    blocks = []
    for n in sizes:
        if n > 0:
            blocks.append(cp.Variable((n, n), PSD=True))
        else:
            blocks.append(cp.Variable(-n, nonneg=True))
    x = cp.hstack([cp.vec(v, order="F") if n > 0 else v for n, v in zip(sizes, blocks)])
    f0 = mats[0].toarray().ravel()
    a = mats[1:].tocsr()
    prob = cp.Problem(cp.Minimize(-f0 @ x), [a @ x == rhs])
    try:
        prob.solve(solver=args.solver)
    except cp.error.SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return 1

    status = {
        cp.OPTIMAL: "optimal",
        cp.INFEASIBLE: "infeasible",
        cp.UNBOUNDED: "unbounded",
    }.get(prob.status, "max-iters")
    xs = []
    for n, var in zip(sizes, blocks):
        val = var.value
        if val is None:
            val = np.zeros((n, n)) if n > 0 else np.zeros(-n)
        xs.append(np.asarray(val).tolist())
    dual = prob.constraints[0].dual_value
    y = np.zeros(len(rhs)) if dual is None else np.asarray(dual, dtype=float).ravel()

    # cvxpy's equality multipliers may carry either sign; keep the one that
    # makes C - sum y_j A_j closest to positive semidefinite
    def slack_min_eig(yv):
        s = -f0 - a.T @ yv
        worst = np.inf
        for b, n in enumerate(sizes):
            part = s[offsets[b]:offsets[b + 1]]
            if n > 0:
                w = part.reshape((n, n), order="F")
                worst = min(worst, np.linalg.eigvalsh((w + w.T) / 2).min())
            elif n < 0:
                worst = min(worst, part.min())
        return worst

    if len(y) and slack_min_eig(-y) > slack_min_eig(y):
        y = -y

    with open(args.output, "w") as fh:
        json.dump(
            {
                "status": status,
                "y": y.tolist(),
                "x": xs,
                "iterations": int(getattr(prob.solver_stats, "num_iters", 0) or 0),
                "objective": prob.value,
            },
            fh,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())

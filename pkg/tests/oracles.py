"""Independent reference implementations used by the tests.

Nothing here imports the package's algorithms: distances come from
Floyd-Warshall on a dense matrix, eigenvalues from a cyclic Jacobi sweep,
gradients from central differences.
"""

from __future__ import annotations

import itertools

import numpy as np

from pna import tensor as T
from pna.tensor import Tensor


def numeric_grad(f, arrays: list[np.ndarray], h: float = 1e-6) -> list[np.ndarray]:
    """Central differences of the scalar ``f(*arrays)`` with respect to each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up = f(*arrays)
            a[idx] = old - h
            down = f(*arrays)
            a[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> float:
    # central differences carry ~1e-10 of rounding noise, so gradients whose
    # norm is below ``floor`` are compared in absolute terms against it
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(build, arrays: list[np.ndarray], h: float = 1e-6, seed: int = 0) -> float:
    """Largest relative error between tape gradients and finite differences.

    ``build(*tensors)`` returns a tensor of any shape; it is contracted with a
    fixed random weight so that every output coordinate contributes.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    with T.no_grad():
        shape = build(*[Tensor(a) for a in arrays]).shape
    w = np.random.default_rng(seed).normal(size=shape)

    def value(*arrs):
        with T.no_grad():
            return float(np.sum(build(*[Tensor(a) for a in arrs]).data * w))

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with T.new_tape():
        out = build(*leaves)
        loss = T.sum(out * Tensor(w))
        loss.backward()
    analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
    numeric = numeric_grad(value, arrays, h)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def module_gradcheck(module, run, h: float = 1e-6, seed: int = 0) -> float:
    """Gradient check with respect to every parameter of ``module``; ``run()`` returns the output."""
    params = module.parameters()
    with T.no_grad():
        shape = run().shape
    w = np.random.default_rng(seed).normal(size=shape)
    module.zero_grad()
    with T.new_tape():
        loss = T.sum(run() * Tensor(w))
        loss.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        num = np.zeros_like(p.data)
        for idx in np.ndindex(p.shape):
            old = p.data[idx]
            vals = []
            for step in (h, -h):
                p.data[idx] = old + step
                with T.no_grad():
                    vals.append(float(np.sum(run().data * w)))
            p.data[idx] = old
            num[idx] = (vals[0] - vals[1]) / (2 * h)
        worst = max(worst, rel_error(analytic, num))
    return worst


def floyd_warshall(adj: np.ndarray) -> np.ndarray:
    n = len(adj)
    d = np.where(adj > 0, 1.0, np.inf)
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def jacobi_eigenvalues(a: np.ndarray, tol: float = 1e-14, sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=np.float64)
    n = len(a)
    for _ in range(sweeps):
        off = np.sqrt(max(np.sum(a**2) - np.sum(np.diag(a) ** 2), 0.0))
        if off < tol:
            break
        for p, q in itertools.combinations(range(n), 2):
            if abs(a[p, q]) < 1e-300:
                continue
            theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
            if theta == 0:
                t = 1.0
            elif abs(theta) > 1e150:
                t = 1 / (2 * theta)  # theta**2 would overflow
            else:
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1))
            c = 1 / np.sqrt(t**2 + 1)
            s = t * c
            rot = np.eye(n)
            rot[p, p] = rot[q, q] = c
            rot[p, q], rot[q, p] = s, -s
            a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def dense_laplacian(adj: np.ndarray) -> np.ndarray:
    return np.diag(adj.sum(axis=1)) - adj


def random_adjacency(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    upper = np.triu(rng.random((n, n)) < p, 1)
    a = (upper | upper.T).astype(np.float64)
    return a

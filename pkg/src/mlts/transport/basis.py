"""Basis functions and quadrature rules used by the transport maps.

The function dictionary spans a constant plus probabilists' Hermite
polynomials He_n per argument, so constant and linear dependence in every
argument is inside the span (He_1(x) = x). Polynomial terms keep every
integrand of the fitted objective inside the exactness range of the Gauss
rules, which makes affine optima exact stationary points of the discrete
objective.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e, legendre

__all__ = [
    "hermite_polynomial",
    "term_design",
    "GaussHermiteRule",
    "make_quadrature",
    "tensor_grid",
    "gauss_legendre_01",
]


def hermite_polynomial(order: int, x: np.ndarray) -> np.ndarray:
    """Probabilists' Hermite polynomial He_n(x)."""
    x = np.asarray(x, dtype=float)
    coeffs = np.zeros(order + 1)
    coeffs[order] = 1.0
    return hermite_e.hermeval(x, coeffs)


def term_design(terms, args: np.ndarray) -> np.ndarray:
    """Design matrix of shape args.shape[:-1] + (len(terms),).

    `args` stacks a component's arguments along the last axis. Each term is
    ("const",), ("lin", j) or ("herm", j, n) and reads argument j only.
    """
    args = np.asarray(args, dtype=float)
    cols = []
    for term in terms:
        kind = term[0]
        if kind == "const":
            cols.append(np.ones(args.shape[:-1]))
        elif kind == "lin":
            cols.append(args[..., term[1]])
        elif kind == "herm":
            cols.append(hermite_polynomial(term[2], args[..., term[1]]))
        else:
            raise ValueError(f"unknown basis term kind {kind!r}")
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class GaussHermiteRule:
    """Gauss quadrature adapted to the standard normal weight."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must have equal length")


def make_quadrature(order: int = 10) -> GaussHermiteRule:
    """Rule integrating f against N(0,1): sum(w * f(nodes)) = E[f(Z)].

    Exact for polynomials of degree <= 2*order - 1.
    """
    nodes, weights = hermite_e.hermegauss(order)
    return GaussHermiteRule(nodes, weights / np.sqrt(2 * np.pi), order)


def tensor_grid(rule: GaussHermiteRule, dim: int):
    """Tensor-product nodes (order^dim, dim) and weights (order^dim,)."""
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod([w.ravel() for w in wgrids], axis=0)
    return nodes, weights


def gauss_legendre_01(order: int = 16):
    """Gauss-Legendre nodes and weights rescaled from [-1,1] to [0,1]."""
    nodes, weights = legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights

"""Monotone triangular maps and their composition over a discretization grid.

A pair map couples two adjacent grid slots. Internally it is lower
triangular in permuted coordinates (the later slot comes first), so its
first component reads only the later slot. Conjugating by the swap gives
the block form used everywhere else:

  apply_filter(v)       pushes a base draw at slot t+h to the state there,
  apply_backward(u, v)  rewrites the slot-t coordinate given the old slot-t
                        value u and the old slot-(t+h) value v.

Each component is monotone in its last argument by construction,
T(prefix, x) = a(prefix) + integral_0^x b(prefix, s)^2 ds, with the inner
integral evaluated by a fixed Gauss-Legendre rule.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation
from .basis import gauss_legendre_01, term_design

__all__ = [
    "MonotoneComponent",
    "TriangularMap",
    "MapComposition",
    "identity_pair_map",
    "apply_composition",
    "save_maps",
    "load_maps",
    "MAP_FORMAT",
    "MAP_FORMAT_VERSION",
]

MAP_FORMAT = "mlts-maps"
MAP_FORMAT_VERSION = 1

# fixed inner rule; exceeds exactness needs for the order-4 dictionary
_GL_NODES, _GL_WEIGHTS = gauss_legendre_01(16)


def _as_args(args, n_args):
    args = np.asarray(args, dtype=float)
    if n_args == 1 and (args.ndim == 0 or args.shape[-1] != 1):
        args = args[..., None]
    if args.shape[-1] != n_args:
        raise ContractViolation(
            f"component expects {n_args} arguments, got shape {args.shape}"
        )
    return args


@dataclass(eq=False)
class MonotoneComponent:
    """Component i of a triangular map, increasing in its last argument."""

    index: int
    a_terms: tuple
    b_terms: tuple
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray

    def __post_init__(self):
        self.a_coeffs = np.asarray(self.a_coeffs, dtype=float)
        self.b_coeffs = np.asarray(self.b_coeffs, dtype=float)
        if self.a_coeffs.shape != (len(self.a_terms),):
            raise ContractViolation("a_coeffs length must match a_terms")
        if self.b_coeffs.shape != (len(self.b_terms),):
            raise ContractViolation("b_coeffs length must match b_terms")

    @property
    def n_args(self) -> int:
        return self.index

    def offset(self, args) -> np.ndarray:
        """a(prefix), the part not depending on the last argument."""
        args = _as_args(args, self.n_args)
        prefix = args[..., :-1]
        return term_design(self.a_terms, prefix) @ self.a_coeffs

    def slope_values(self, args) -> np.ndarray:
        """b(prefix, x) at the given full argument vector."""
        args = _as_args(args, self.n_args)
        return term_design(self.b_terms, args) @ self.b_coeffs

    def evaluate(self, args) -> np.ndarray:
        """a(prefix) + integral_0^x b(prefix, s)^2 ds."""
        args = _as_args(args, self.n_args)
        x = args[..., -1]
        # rescale the [0,1] rule onto [0,x]; valid for either sign of x
        t_nodes = x[..., None] * _GL_NODES
        quad_args = np.broadcast_to(
            args[..., None, :], args.shape[:-1] + (_GL_NODES.size, self.n_args)
        ).copy()
        quad_args[..., -1] = t_nodes
        b = term_design(self.b_terms, quad_args) @ self.b_coeffs
        return self.offset(args) + x * np.sum(_GL_WEIGHTS * b * b, axis=-1)

    def partial(self, args) -> np.ndarray:
        """Derivative in the last argument: b(prefix, x)^2."""
        b = self.slope_values(args)
        return b * b

    def __call__(self, args) -> np.ndarray:
        return self.evaluate(args)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "a_coeffs": self.a_coeffs.tolist(),
            "b_coeffs": self.b_coeffs.tolist(),
            "basis_spec": {
                "a": [list(t) for t in self.a_terms],
                "b": [list(t) for t in self.b_terms],
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MonotoneComponent":
        spec = doc["basis_spec"]
        return cls(
            index=int(doc["index"]),
            a_terms=tuple(tuple(t) for t in spec["a"]),
            b_terms=tuple(tuple(t) for t in spec["b"]),
            a_coeffs=np.asarray(doc["a_coeffs"], dtype=float),
            b_coeffs=np.asarray(doc["b_coeffs"], dtype=float),
        )


@dataclass(eq=False)
class TriangularMap:
    """Monotone pair map, lower triangular in swapped coordinates."""

    components: list
    permutation: tuple = (1, 0)

    def __post_init__(self):
        if len(self.components) != 2:
            raise ContractViolation("pair map needs exactly 2 components")
        if [c.index for c in self.components] != [1, 2]:
            raise ContractViolation("component indices must be (1, 2)")

    @property
    def filter_component(self) -> MonotoneComponent:
        """The component acting on the later slot alone."""
        return self.components[0]

    def forward(self, z) -> np.ndarray:
        """Triangular evaluation in permuted coordinates, z shape (..., 2)."""
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        out[..., 0] = self.components[0].evaluate(z[..., :1])
        out[..., 1] = self.components[1].evaluate(z)
        return out

    def partials(self, z) -> np.ndarray:
        """Diagonal derivatives (d1 T1, d2 T2) at z, shape (..., 2)."""
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        out[..., 0] = self.components[0].partial(z[..., :1])
        out[..., 1] = self.components[1].partial(z)
        return out

    def apply_filter(self, v) -> np.ndarray:
        """Push the slot-(t+h) coordinate from base to state."""
        return self.components[0].evaluate(v)

    def apply_backward(self, u, v) -> np.ndarray:
        """New slot-t coordinate from old values (u at t, v at t+h)."""
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return self.components[1].evaluate(np.stack([v, u], axis=-1))

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, doc: dict) -> "TriangularMap":
        comps = [MonotoneComponent.from_dict(c) for c in doc["components"]]
        return cls(components=comps)


def identity_pair_map(order: int = 4) -> TriangularMap:
    """Identity map in the declared dictionary (offsets 0, slopes 1).

    He_1 is the linear term, so no separate linear column is needed.
    """
    a1_terms = (("const",),)
    b1_terms = (("const",),) + tuple(("herm", 0, n) for n in range(1, order + 1))
    a2_terms = (("const",),) + tuple(("herm", 0, n) for n in range(1, order + 1))
    b2_terms = (
        (("const",),)
        + tuple(("herm", 0, n) for n in range(1, order + 1))
        + tuple(("herm", 1, n) for n in range(1, order + 1))
    )

    def unit(terms):
        c = np.zeros(len(terms))
        c[0] = 1.0
        return c

    comp1 = MonotoneComponent(1, a1_terms, b1_terms,
                              np.zeros(len(a1_terms)), unit(b1_terms))
    comp2 = MonotoneComponent(2, a2_terms, b2_terms,
                              np.zeros(len(a2_terms)), unit(b2_terms))
    return TriangularMap([comp1, comp2])


@dataclass(eq=False)
class MapComposition:
    """All pair maps of one level, ordered by grid step 0 .. n_steps-1."""

    maps: list
    level: int
    n_obs: int
    obs_interval: float = 1.0
    order: int = 4
    model_name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = 2**self.level * self.n_obs
        if len(self.maps) != expected:
            raise ContractViolation(
                f"level {self.level} with {self.n_obs} observation intervals "
                f"needs {expected} maps, got {len(self.maps)}"
            )

    @property
    def n_steps(self) -> int:
        return len(self.maps)

    @property
    def n_nodes(self) -> int:
        return len(self.maps) + 1

    @property
    def final_filter(self) -> MonotoneComponent:
        """Map pushing a base draw to the state at the final time."""
        return self.maps[-1].filter_component

    def __call__(self, z) -> np.ndarray:
        return apply_composition(self, z)

    def to_dict(self) -> dict:
        h = 2.0**-self.level
        return {
            "format": MAP_FORMAT,
            "version": MAP_FORMAT_VERSION,
            "level": self.level,
            "n_obs": self.n_obs,
            "obs_interval": self.obs_interval,
            "o_m": self.order,
            "model": self.model_name,
            "meta": self.meta,
            "maps": [
                dict(t=j * h, step=j, **m.to_dict())
                for j, m in enumerate(self.maps)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MapComposition":
        if doc.get("format") != MAP_FORMAT:
            raise ContractViolation("not a transport map document")
        if int(doc.get("version", -1)) > MAP_FORMAT_VERSION:
            raise ContractViolation(
                f"map document version {doc['version']} is newer than supported"
            )
        entries = sorted(doc["maps"], key=lambda m: m["step"])
        return cls(
            maps=[TriangularMap.from_dict(m) for m in entries],
            level=int(doc["level"]),
            n_obs=int(doc["n_obs"]),
            obs_interval=float(doc.get("obs_interval", 1.0)),
            order=int(doc.get("o_m", 4)),
            model_name=doc.get("model", ""),
            meta=doc.get("meta", {}),
        )


def apply_composition(composition: MapComposition, z) -> np.ndarray:
    """Run the backward sweep of pair maps over a base vector.

    z has the grid nodes along the last axis. Maps are applied from the
    final step down to step 0; each rewrites its two slots and leaves the
    rest untouched, so the output holds state-valued smoothing samples.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != composition.n_nodes:
        raise ContractViolation(
            f"expected {composition.n_nodes} coordinates, got {z.shape[-1]}"
        )
    out = z.copy()
    for j in range(composition.n_steps - 1, -1, -1):
        pair = composition.maps[j]
        old_next = out[..., j + 1].copy()
        out[..., j] = pair.apply_backward(out[..., j], old_next)
        out[..., j + 1] = pair.apply_filter(old_next)
    return out


def save_maps(composition: MapComposition, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(composition.to_dict(), fh)


def load_maps(path) -> MapComposition:
    with open(path, encoding="utf-8") as fh:
        return MapComposition.from_dict(json.load(fh))

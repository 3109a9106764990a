"""Offspring laws, the builtin model catalogue and chain sampling.

A grid model subdivides the unit square into an ``L x L`` grid and keeps a
random subset of the cells; a disc model keeps a random number of small
discs tangent to the inside of the parent disc.  Applying the law
independently inside every kept piece generates the nested approximations
``S_0 > S_1 > ...`` of a random fractal.

Grid letters ``(i, j)`` are 1-based, ``i`` the column and ``j`` the row.
Internally a level-``k`` cell is stored by its integer lower-left corner
``(X, Y)`` in units of ``L**-k``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ModelInvalidError, ParameterError, ResourceGuardError
from .rng import Stream

PROB_TOL = 1e-9
MEMORY_GUARD_BITS = 26


@dataclass(frozen=True)
class ExplicitLaw:
    """Finitely supported law: ``atoms[a]`` is chosen with ``probs[a]``."""

    atoms: tuple
    probs: tuple


@dataclass(frozen=True)
class BernoulliLaw:
    """Every cell is kept independently with probability ``p``."""

    p: float


Law = Union[ExplicitLaw, BernoulliLaw]


@dataclass(frozen=True, eq=False)
class GridModel:
    L: int
    law: Law
    name: str = "custom"

    @property
    def model_id(self) -> str:
        return f"{self.name}_L{self.L}"

    @property
    def rho(self) -> float:
        return 1.0 / self.L

    @property
    def diameter(self) -> float:
        return math.sqrt(2.0)

    @property
    def is_bernoulli(self) -> bool:
        return isinstance(self.law, BernoulliLaw)

    @cached_property
    def marginals(self) -> np.ndarray:
        """Inclusion probabilities, flat index ``(i - 1) * L + (j - 1)``."""
        L2 = self.L * self.L
        if self.is_bernoulli:
            return np.full(L2, float(self.law.p))
        return self.atom_probs @ self.atom_masks.astype(float)

    @property
    def inclusion(self) -> np.ndarray:
        """Inclusion probabilities as an ``(L, L)`` array ``[i - 1, j - 1]``."""
        return self.marginals.reshape(self.L, self.L)

    @cached_property
    def pair_probs(self) -> np.ndarray:
        """``P[c and c' both kept]`` for flat cell indices ``c, c'``."""
        L2 = self.L * self.L
        if self.is_bernoulli:
            p = float(self.law.p)
            out = np.full((L2, L2), p * p)
            np.fill_diagonal(out, p)
            return out
        m = self.atom_masks.astype(float)
        return (m.T * self.atom_probs) @ m

    @cached_property
    def atom_masks(self) -> np.ndarray:
        if self.is_bernoulli:
            raise AttributeError("Bernoulli laws have no stored atoms")
        L = self.L
        out = np.zeros((len(self.law.atoms), L * L), dtype=bool)
        for a, atom in enumerate(self.law.atoms):
            for i, j in atom:
                out[a, (i - 1) * L + (j - 1)] = True
        return out

    @cached_property
    def atom_probs(self) -> np.ndarray:
        return np.asarray(self.law.probs, dtype=float)

    @cached_property
    def member_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(atoms, max_size)`` flat indices (``-1`` pad) and sizes."""
        if self.is_bernoulli:
            return np.full((1, 1), -1, dtype=np.int64), np.zeros(1, dtype=np.int64)
        masks = self.atom_masks
        sizes = masks.sum(axis=1).astype(np.int64)
        width = max(1, int(sizes.max()))
        table = np.full((masks.shape[0], width), -1, dtype=np.int64)
        for a in range(masks.shape[0]):
            idx = np.flatnonzero(masks[a])
            table[a, : idx.size] = idx
        return table, sizes

    def offspring_distribution(self) -> dict[int, float]:
        if self.is_bernoulli:
            n, p = self.L * self.L, float(self.law.p)
            return {k: math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)}
        dist: dict[int, float] = {}
        for size, pr in zip(self.atom_masks.sum(axis=1), self.atom_probs):
            dist[int(size)] = dist.get(int(size), 0.0) + float(pr)
        return dist

    def mean_offspring(self) -> float:
        return float(self.marginals.sum())


@dataclass(frozen=True, eq=False)
class DiscModel:
    """Discs of radius ``1/L`` tangent inside the parent, equally spaced with
    a uniformly random phase.  ``count_probs[k]`` is the probability of ``k``
    children; the default is exactly ``L``.
    """

    L: int
    count_probs: tuple = ()
    name: str = "vv_discs"

    def __post_init__(self):
        if not self.count_probs:
            probs = [0.0] * (self.L + 1)
            probs[self.L] = 1.0
            object.__setattr__(self, "count_probs", tuple(probs))

    @property
    def model_id(self) -> str:
        return f"{self.name}_L{self.L}"

    @property
    def rho(self) -> float:
        return 1.0 / self.L

    @property
    def diameter(self) -> float:
        return 2.0

    def offspring_distribution(self) -> dict[int, float]:
        return {k: float(p) for k, p in enumerate(self.count_probs) if p > 0}

    def mean_offspring(self) -> float:
        return float(sum(k * p for k, p in enumerate(self.count_probs)))


Model = Union[GridModel, DiscModel]


@dataclass(frozen=True)
class Classification:
    is_uniform: bool
    is_vertically_degenerate: bool
    is_horizontally_degenerate: bool
    is_ahlfors: bool
    is_surviving: bool
    is_deterministic: bool
    rho: float
    mean_offspring: float

    @property
    def is_degenerate(self) -> bool:
        return self.is_vertically_degenerate or self.is_horizontally_degenerate


def _validate_explicit(L: int, atoms, probs) -> list[str]:
    errs = []
    if len(atoms) != len(probs):
        errs.append("atoms and probabilities differ in length")
    if len(atoms) == 0:
        errs.append("law has no atoms")
    for a, atom in enumerate(atoms):
        seen = set()
        for letter in atom:
            if len(letter) != 2 or not all(isinstance(v, (int, np.integer)) for v in letter):
                errs.append(f"atom {a}: square {letter!r} is not an integer pair")
                continue
            i, j = int(letter[0]), int(letter[1])
            if not (1 <= i <= L and 1 <= j <= L):
                errs.append(f"atom {a}: square ({i}, {j}) outside [1, {L}]^2")
            if (i, j) in seen:
                errs.append(f"atom {a}: square ({i}, {j}) listed twice")
            seen.add((i, j))
    for a, p in enumerate(probs):
        if not (isinstance(p, (int, float)) and math.isfinite(p) and p >= 0):
            errs.append(f"atom {a}: probability {p!r} is not a non-negative number")
    if probs and all(isinstance(p, (int, float)) for p in probs):
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            errs.append(f"probabilities sum to {total!r}, not 1")
    return errs


def validate_model(model: Model) -> None:
    """Raise :class:`ModelInvalidError` listing every problem found."""
    errs = []
    if not isinstance(model.L, (int, np.integer)) or model.L < 2:
        raise ModelInvalidError(f"grid size L={model.L!r} must be an integer >= 2")
    if isinstance(model, GridModel):
        if model.is_bernoulli:
            p = model.law.p
            if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
                errs.append(f"Bernoulli parameter {p!r} outside [0, 1]")
        else:
            errs += _validate_explicit(model.L, model.law.atoms, model.law.probs)
    else:
        probs = model.count_probs
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > PROB_TOL:
            errs.append("child-count probabilities must be non-negative and sum to 1")
        if model.L < 3:
            errs.append("disc models need L >= 3")
        # Equally spaced tangent discs of radius 1/L stay disjoint while
        # their centre spacing is at least twice the radius.
        kmax = max((k for k, p in enumerate(probs) if p > 0), default=0)
        if kmax >= 2 and (1 - 1 / model.L) * math.sin(math.pi / kmax) < 1 / model.L - 1e-12:
            errs.append(f"{kmax} discs of radius 1/{model.L} do not fit disjointly")
    if not errs:
        mean = model.mean_offspring()
        if abs(mean - model.L) > PROB_TOL:
            errs.append(f"mean offspring {mean!r} differs from L={model.L} (not critical)")
    if errs:
        raise ModelInvalidError("; ".join(errs))


def classify(model: Model) -> Classification:
    validate_model(model)
    dist = model.offspring_distribution()
    surviving = all(k >= 1 for k, p in dist.items() if p > 0)
    if isinstance(model, DiscModel):
        return Classification(
            is_uniform=False,
            is_vertically_degenerate=False,
            is_horizontally_degenerate=False,
            is_ahlfors=set(k for k, p in dist.items() if p > 0) == {model.L},
            is_surviving=surviving,
            is_deterministic=False,
            rho=model.rho,
            mean_offspring=model.mean_offspring(),
        )
    L = model.L
    uniform = bool(np.all(np.abs(model.marginals - 1.0 / L) <= 1e-12))
    if model.is_bernoulli:
        p = float(model.law.p)
        vert = horiz = False
        ahlfors = p in (0.0, 1.0) and round(p * L * L) == L
        deterministic = p in (0.0, 1.0)
    else:
        cols = model.atom_masks.reshape(-1, L, L)
        live = model.atom_probs > 0
        vert = bool(np.all(cols[live].sum(axis=2) == 1))
        horiz = bool(np.all(cols[live].sum(axis=1) == 1))
        ahlfors = set(k for k, p in dist.items() if p > 0) == {L}
        deterministic = int(live.sum()) == 1
    return Classification(
        is_uniform=uniform,
        is_vertically_degenerate=vert,
        is_horizontally_degenerate=horiz,
        is_ahlfors=ahlfors,
        is_surviving=surviving,
        is_deterministic=deterministic,
        rho=model.rho,
        mean_offspring=model.mean_offspring(),
    )


def _uniform_atoms(atoms) -> ExplicitLaw:
    atoms = tuple(tuple(sorted(a)) for a in atoms)
    return ExplicitLaw(atoms, tuple([1.0 / len(atoms)] * len(atoms)))


BUILTIN_DEFAULT_L = {
    "percolation": 2,
    "uniform_choice": 2,
    "peres_solomyak": 4,
    "column_degenerate": 2,
    "row_degenerate": 2,
    "four_corner": 4,
    "vv_discs": 3,
    "vv_discs_random": 3,
}


def make_builtin(name: str, L: int | None = None) -> Model:
    if name not in BUILTIN_DEFAULT_L:
        raise ParameterError(
            f"unknown model {name!r}; choose from {', '.join(sorted(BUILTIN_DEFAULT_L))}"
        )
    if L is None:
        L = BUILTIN_DEFAULT_L[name]
    if not isinstance(L, (int, np.integer)) or L < 2:
        raise ParameterError(f"L={L!r} must be an integer >= 2")
    L = int(L)
    if name in ("peres_solomyak", "four_corner") and L != 4:
        raise ParameterError(f"{name} is defined only for L=4")
    if name == "percolation":
        model: Model = GridModel(L, BernoulliLaw(1.0 / L), name)
    elif name == "uniform_choice":
        cells = [(i, j) for i in range(1, L + 1) for j in range(1, L + 1)]
        model = GridModel(L, _uniform_atoms(itertools.combinations(cells, L)), name)
    elif name == "peres_solomyak":
        blocks = [[(2 * bi + di, 2 * bj + dj) for di in (1, 2) for dj in (1, 2)]
                  for bi in range(2) for bj in range(2)]
        model = GridModel(L, _uniform_atoms(itertools.product(*blocks)), name)
    elif name == "column_degenerate":
        rows = itertools.product(range(1, L + 1), repeat=L)
        model = GridModel(L, _uniform_atoms(
            [[(i + 1, r[i]) for i in range(L)] for r in rows]), name)
    elif name == "row_degenerate":
        cols = itertools.product(range(1, L + 1), repeat=L)
        model = GridModel(L, _uniform_atoms(
            [[(c[j], j + 1) for j in range(L)] for c in cols]), name)
    elif name == "four_corner":
        model = GridModel(L, ExplicitLaw((((1, 1), (1, 4), (4, 1), (4, 4)),), (1.0,)), name)
    elif name == "vv_discs":
        if L < 3:
            raise ParameterError("vv_discs needs L >= 3")
        model = DiscModel(L, name=name)
    else:
        if L != 3:
            raise ParameterError("vv_discs_random is defined only for L=3")
        model = DiscModel(3, tuple([1.0 / 7.0] * 7), name=name)
    validate_model(model)
    return model


def model_from_dict(obj: dict, name: str = "custom") -> GridModel:
    """Build a grid model from its JSON description, reporting every defect."""
    errs = []
    if not isinstance(obj, dict):
        raise ModelInvalidError("model description must be a JSON object")
    L = obj.get("L")
    if not isinstance(L, int) or isinstance(L, bool) or L < 2:
        errs.append(f"'L' must be an integer >= 2, got {L!r}")
    law = obj.get("law")
    if not isinstance(law, dict):
        errs.append("'law' must be an object")
        raise ModelInvalidError("; ".join(errs))
    kind = law.get("type")
    if kind == "bernoulli":
        p = law.get("p")
        if not isinstance(p, (int, float)) or isinstance(p, bool):
            errs.append(f"'p' must be a number, got {p!r}")
        if errs:
            raise ModelInvalidError("; ".join(errs))
        model = GridModel(L, BernoulliLaw(float(p)), name)
    elif kind == "explicit":
        raw = law.get("atoms")
        if not isinstance(raw, list) or not raw:
            errs.append("'atoms' must be a non-empty list")
            raise ModelInvalidError("; ".join(errs))
        atoms, probs = [], []
        for a, entry in enumerate(raw):
            if not isinstance(entry, dict) or "squares" not in entry or "prob" not in entry:
                errs.append(f"atom {a} must have 'squares' and 'prob'")
                continue
            sq = entry["squares"]
            if not isinstance(sq, list) or not all(isinstance(q, list) for q in sq):
                errs.append(f"atom {a}: 'squares' must be a list of [i, j] pairs")
                continue
            atoms.append(tuple(tuple(q) for q in sq))
            probs.append(entry["prob"])
        if isinstance(L, int) and L >= 2:
            errs += _validate_explicit(L, atoms, probs)
        if errs:
            raise ModelInvalidError("; ".join(errs))
        model = GridModel(L, ExplicitLaw(tuple(tuple(sorted(a)) for a in atoms),
                                         tuple(float(p) for p in probs)), name)
    else:
        errs.append(f"law 'type' must be 'explicit' or 'bernoulli', got {kind!r}")
        raise ModelInvalidError("; ".join(errs))
    validate_model(model)
    return model


def load_model(path: str | Path) -> GridModel:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelInvalidError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(obj, name=path.stem)


def model_to_dict(model: GridModel) -> dict:
    if model.is_bernoulli:
        return {"L": model.L, "law": {"type": "bernoulli", "p": model.law.p}}
    return {"L": model.L, "law": {"type": "explicit", "atoms": [
        {"squares": [list(q) for q in a], "prob": p}
        for a, p in zip(model.law.atoms, model.law.probs)]}}


@dataclass
class Realization:
    """Levels ``0..n`` of one chain.

    For grid models ``levels[k]`` is an ``(N_k, 2)`` integer array of cell
    corners in units of ``L**-k``; for disc models it holds disc centres.
    """

    model: Model
    levels: list
    z_trace: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.levels) - 1

    @property
    def is_grid(self) -> bool:
        return isinstance(self.model, GridModel)

    def size(self, k: int) -> float:
        """Side (grid) or radius (disc) of the pieces at level ``k``."""
        return self.model.rho**k

    def count(self, k: int) -> int:
        return int(self.levels[k].shape[0])

    @property
    def extinct(self) -> bool:
        return self.count(self.n) == 0

    def addresses(self, k: int) -> list[tuple]:
        from .geometry import cell_to_address

        if not self.is_grid:
            raise ParameterError("addresses exist only for grid models")
        return [cell_to_address(int(X), int(Y), k, self.model.L) for X, Y in self.levels[k]]


def check_memory_guard(model: Model, n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ParameterError(f"depth n={n!r} must be a non-negative integer")
    if n * math.log2(model.L) > MEMORY_GUARD_BITS + 1e-12:
        raise ResourceGuardError(
            f"depth n={n} with L={model.L} exceeds the memory guard "
            f"n*log2(L) <= {MEMORY_GUARD_BITS}"
        )


def _grid_children(model: GridModel, cells: np.ndarray, stream: Stream, level: int) -> np.ndarray:
    L = model.L
    if cells.shape[0] == 0:
        return cells
    codes = cells[:, 0].astype(np.uint64) * np.uint64(L**level) + cells[:, 1].astype(np.uint64)
    sub = stream.child(level)
    if model.is_bernoulli:
        keep = sub.uniforms(codes, L * L) < model.law.p
        parent, m = np.nonzero(keep)
    else:
        table, sizes = model.member_table
        cum = np.cumsum(model.atom_probs)
        u = sub.uniforms(codes, 1)[:, 0] * cum[-1]
        a = np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)
        rows = table[a]
        parent, col = np.nonzero(rows >= 0)
        m = rows[parent, col]
    kids = np.empty((parent.size, 2), dtype=np.int64)
    kids[:, 0] = cells[parent, 0] * L + m // L
    kids[:, 1] = cells[parent, 1] * L + m % L
    order = np.lexsort((kids[:, 1], kids[:, 0]))
    return kids[order]


def _disc_children(model: DiscModel, centres: np.ndarray, codes: np.ndarray,
                   stream: Stream, level: int):
    if centres.shape[0] == 0:
        return centres, codes
    u = stream.child(level).uniforms(codes, 2)
    cum = np.cumsum(model.count_probs)
    counts = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"), len(cum) - 1)
    phase = 2.0 * np.pi * u[:, 1]
    parent = np.repeat(np.arange(centres.shape[0]), counts)
    slot = np.arange(parent.size) - np.repeat(np.cumsum(counts) - counts, counts)
    ang = phase[parent] + 2.0 * np.pi * slot / np.maximum(counts[parent], 1)
    r = model.rho**level
    dist = r * (1.0 - model.rho)
    kids = centres[parent] + dist * np.column_stack([np.cos(ang), np.sin(ang)])
    from .rng import mix64_array

    kid_codes = mix64_array(codes[parent] ^ mix64_array(slot.astype(np.uint64)))
    return kids, kid_codes


def sample_chain(model: Model, n: int, stream: Stream) -> Realization:
    """Sample levels ``0..n`` of one chain from the given stream."""
    check_memory_guard(model, n)
    rho = model.rho
    if isinstance(model, GridModel):
        levels = [np.zeros((1, 2), dtype=np.int64)]
        for k in range(n):
            levels.append(_grid_children(model, levels[-1], stream, k))
    else:
        levels = [np.zeros((1, 2))]
        codes = np.zeros(1, dtype=np.uint64)
        for k in range(n):
            kids, codes = _disc_children(model, levels[-1], codes, stream, k)
            levels.append(kids)
    z = np.array([rho**k * lv.shape[0] for k, lv in enumerate(levels)])
    return Realization(model, levels, z)

"""Computation rates: closed forms, coefficient search and Monte-Carlo estimates.

Monte-Carlo estimates use I(Y; V | C) = H(V | C) - E[H(V | Y, C)] with C the
conditioning variables.  H(V | C) is computed exactly by counting label pairs;
the posterior entropy is averaged over sampled label pairs and noise, with the
posterior summed exactly over every label pair.  All estimates made with the
same seed share their samples, so comparisons and argmax searches use common
random numbers.

SNR convention: unit noise variance and gamma = sqrt(P / E_avg) with E_avg the
mean energy of the constellation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .algebra import RingElement, canonical_associate, enumerate_ball, norm
from .constellation import LabelingMap
from .lattice import BudgetExceededError
from .likelihood import FoldLattice, PointSet, entropy_bits, posterior
from .mlc import FunctionCoeffs, PairModel, check_flexible, fold_lattices, level_generators

MODES = ("direct", "mlc", "sub", "para")
SEARCH_BUDGET = 10**6
LEVEL_SEARCH_BUDGET = 10**4


@dataclass(frozen=True)
class ChannelConfig:
    h: tuple[complex, ...]
    P: float

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(complex(x) for x in self.h))
        if not self.P > 0:
            raise ValueError("transmit power must be positive")

    @classmethod
    def from_snr_db(cls, h: Sequence[complex], snr_db: float) -> "ChannelConfig":
        return cls(tuple(h), 10.0 ** (snr_db / 10.0))

    @property
    def K(self) -> int:
        return len(self.h)


@dataclass(frozen=True)
class RateEstimate:
    bits: float
    stderr: float
    n_samples: int
    seed: int


@dataclass(frozen=True)
class MlcRates:
    mode: str
    levels: tuple[RateEstimate, ...]
    total: RateEstimate


@dataclass(frozen=True)
class FlexibleRate:
    terms: tuple[RateEstimate, ...]
    rate: RateEstimate


# ---------------------------------------------------------------------------
# closed forms


def _vec(x) -> np.ndarray:
    return np.array([complex(v) for v in np.atleast_1d(np.asarray(x, dtype=object))], dtype=complex)


def alpha_mmse(h, a, P: float) -> complex:
    """MMSE scaling P h^H a / (1 + P ||h||^2)."""
    h, a = _vec(h), _vec(a)
    return complex(P * np.vdot(h, a) / (1.0 + P * np.vdot(h, h).real))


def _rate_terms(h: np.ndarray, A: np.ndarray, P: float) -> np.ndarray:
    """Rates for rows of A; uses ||a||^2||h||^2 - |h^H a|^2 = sum_{i<j} |a_i h_j - a_j h_i|^2."""
    a2 = np.sum(np.abs(A) ** 2, axis=1)
    cross = np.zeros(A.shape[0])
    K = h.size
    for i in range(K):
        for j in range(i + 1, K):
            cross += np.abs(A[:, i] * h[j] - A[:, j] * h[i]) ** 2
    h2 = float(np.sum(np.abs(h) ** 2))
    with np.errstate(divide="ignore"):
        r = np.log2((1.0 + P * h2) / (a2 + P * cross))
    return np.maximum(r, 0.0)


def computation_rate(h, a, P: float) -> float:
    """log2+ of 1 / (||a||^2 - P |h^H a|^2 / (1 + P ||h||^2))."""
    h, a = _vec(h), _vec(a)
    if h.size != a.size:
        raise ValueError("h and a must have the same length")
    if not np.any(a):
        raise ValueError("coefficient vector must be nonzero")
    return float(_rate_terms(h, a[None, :], P)[0])


def search_coeffs(h, P: float, ring: str, radius: float) -> tuple[tuple[RingElement, ...], float]:
    """Exhaustive best integer coefficient vector with entries of norm <= radius^2.

    Rates are invariant to a common unit, so only vectors whose first nonzero
    entry is its canonical associate are searched.  Ties go to the smaller
    ||a||^2 and then to the lexicographically smallest coordinates.
    """
    h = _vec(h)
    K = h.size
    elems = sorted(
        (x for x in enumerate_ball(ring, radius) if norm(x) <= radius * radius),
        key=lambda x: (x.a, x.b),
    )
    if len(elems) ** K > SEARCH_BUDGET:
        raise BudgetExceededError(f"{len(elems) ** K} candidates exceed {SEARCH_BUDGET}")
    cands = []
    for combo in product(elems, repeat=K):
        first = next((x for x in combo if not x.is_zero()), None)
        if first is None or canonical_associate(first) != first:
            continue
        cands.append(combo)
    A = np.array([[complex(x) for x in c] for c in cands])
    rates = _rate_terms(h, A, P)
    best = float(rates.max())
    tol = 1e-12 * max(1.0, abs(best))
    ties = [i for i in np.nonzero(rates >= best - tol)[0]]
    pick = min(ties, key=lambda i: (sum(norm(x) for x in cands[i]), [(x.a, x.b) for x in cands[i]]))
    return tuple(cands[pick]), float(rates[pick])


# ---------------------------------------------------------------------------
# Monte-Carlo engine


@dataclass(frozen=True, eq=False)
class _Samples:
    """Shared label-pair draws and noise for one (channel, seed) cell."""

    model: PairModel
    sigma2: float
    k: np.ndarray
    noise: np.ndarray
    seed: int

    @classmethod
    def draw(cls, cfg: ChannelConfig, labeling: LabelingMap, n_samples: int, seed: int) -> "_Samples":
        if n_samples < 2:
            raise ValueError("need at least two samples")
        if cfg.K != 2:
            raise ValueError("two-user channels only")
        model = PairModel.build(labeling, cfg.h)
        n = labeling.constellation.size
        rng = np.random.default_rng(seed)
        k = rng.integers(n, size=n_samples) * n + rng.integers(n, size=n_samples)
        noise = (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)) / math.sqrt(2.0)
        sigma2 = labeling.constellation.mean_energy / cfg.P
        return cls(model, sigma2, k, noise * math.sqrt(sigma2), seed)

    @property
    def n(self) -> int:
        return self.k.size


def _exact_conditional_entropy(target: np.ndarray, cond: np.ndarray) -> float:
    _, joint = np.unique(np.stack([cond, target]), axis=1, return_counts=True)
    _, marg = np.unique(cond, return_counts=True)
    total = target.size
    return float((-(joint * np.log2(joint)).sum() + (marg * np.log2(marg)).sum()) / total)


def _information(
    smp: _Samples,
    points: np.ndarray,
    target: np.ndarray,
    cond: np.ndarray | None = None,
    fold: FoldLattice | None = None,
) -> np.ndarray:
    """Per-sample contributions whose mean is I(Y'; T | C), Y' = points[k] + noise."""
    target = np.asarray(target, dtype=np.int64)
    cond = np.zeros_like(target) if cond is None else np.asarray(cond, dtype=np.int64)
    n_t = int(target.max()) + 1
    y = points[smp.k] + smp.noise
    ck = cond[smp.k]
    H = np.empty(smp.n)
    for c in np.unique(ck):
        sel = np.nonzero(ck == c)[0]
        members = cond == c
        pset = PointSet.compress(points[members], target[members], n_t, fold)
        H[sel] = entropy_bits(posterior(y[sel], pset, smp.sigma2, fold))
    return _exact_conditional_entropy(target, cond) - H


def _estimate(contrib: np.ndarray, smp: _Samples) -> RateEstimate:
    return RateEstimate(float(np.mean(contrib)), float(np.std(contrib, ddof=1) / math.sqrt(contrib.size)), contrib.size, smp.seed)


def _direct_targets(labeling: LabelingMap, model: PairModel, b1, b2) -> np.ndarray:
    n = labeling.constellation.size
    i1, i2 = labeling.label_index(b1), labeling.label_index(b2)
    if i1 == 0 and i2 == 0:
        raise ValueError("coefficient pair (0, 0) has no decodable function")
    u, v = np.divmod(np.arange(n * n), n)
    mul = labeling.mul_table
    return labeling.add_table[mul[i1, u], mul[i2, v]]


def mi_direct(cfg: ChannelConfig, labeling: LabelingMap, b1, b2, n_samples: int, seed: int) -> RateEstimate:
    """I(Y; b1*C1 + b2*C2) with the arithmetic of the whole label ring."""
    smp = _Samples.draw(cfg, labeling, n_samples, seed)
    return _estimate(_information(smp, smp.model.sums, _direct_targets(labeling, smp.model, b1, b2)), smp)


def _level_contributions(smp: _Samples, labeling: LabelingMap, coeffs: FunctionCoeffs, mode: str) -> list[np.ndarray]:
    coeffs.check(labeling.moduli)
    model = smp.model
    fvals = model.functions(coeffs)
    L = fvals.shape[1]
    out = []
    if mode == "mlc":
        for l in range(L):
            out.append(_information(smp, model.sums, fvals[:, l], model.prefix_index(fvals, l)))
    elif mode == "sub":
        gens = level_generators(labeling)
        folds = fold_lattices(labeling)
        shifted = model.sums.copy()
        for l in range(L):
            out.append(_information(smp, shifted, fvals[:, l], fold=folds[l] if l < L - 1 else None))
            shifted = shifted - gens[l] * fvals[:, l]
    elif mode == "para":
        level_generators(labeling)
        folds = fold_lattices(labeling)
        for l in range(L):
            out.append(_information(smp, model.sums, fvals[:, l], fold=folds[l] if L > 1 else None))
    elif mode == "marginal":
        for l in range(L):
            out.append(_information(smp, model.sums, fvals[:, l]))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def mi_mlc(
    cfg: ChannelConfig, labeling: LabelingMap, coeffs: FunctionCoeffs, n_samples: int, seed: int, mode: str = "mlc"
) -> MlcRates:
    """Per-level rates and their sum for the multistage, suboptimal or parallel decoder.

    ``mode="marginal"`` gives the unconditioned per-level terms I(Y; V^l).
    """
    smp = _Samples.draw(cfg, labeling, n_samples, seed)
    contribs = _level_contributions(smp, labeling, coeffs, mode)
    levels = tuple(_estimate(c, smp) for c in contribs)
    return MlcRates(mode, levels, _estimate(np.sum(contribs, axis=0), smp))


def mi_joint(cfg: ChannelConfig, labeling: LabelingMap, coeffs: FunctionCoeffs, n_samples: int, seed: int) -> RateEstimate:
    """I(Y; V^1, ..., V^L) for the per-level functions taken jointly."""
    smp = _Samples.draw(cfg, labeling, n_samples, seed)
    coeffs.check(labeling.moduli)
    fvals = smp.model.functions(coeffs)
    joint = smp.model.prefix_index(fvals, fvals.shape[1])
    return _estimate(_information(smp, smp.model.sums, joint), smp)


def mi_flexible(cfg: ChannelConfig, labeling: LabelingMap, B1, B2, n_samples: int, seed: int) -> FlexibleRate:
    """min{I(Y;R1|R2), I(Y;R2|R1), I(Y;R1,R2)/2, I(Y;R1,R2|R1+R2)} for R = B1 c_1 + B2 c_2."""
    if labeling.n_components != 2 or len(set(labeling.moduli)) != 1:
        raise ValueError("flexible decoding needs two levels over the same field")
    q = labeling.moduli[0]
    B1, B2 = check_flexible(B1, B2, q)
    smp = _Samples.draw(cfg, labeling, n_samples, seed)
    m = smp.model
    r = (m.labels1 @ B1.T + m.labels2 @ B2.T) % q
    r1, r2 = r[:, 0], r[:, 1]
    joint = r1 * q + r2
    contribs = [
        _information(smp, m.sums, r1, r2),
        _information(smp, m.sums, r2, r1),
        0.5 * _information(smp, m.sums, joint),
        _information(smp, m.sums, joint, (r1 + r2) % q),
    ]
    terms = tuple(_estimate(c, smp) for c in contribs)
    best = min(range(4), key=lambda i: terms[i].bits)
    return FlexibleRate(terms, terms[best])


# ---------------------------------------------------------------------------
# coefficient search


def _projective_pairs(q: int) -> list[tuple[int, int]]:
    return [(1, b) for b in range(q)] + [(0, 1)]


def _ring_pairs(labeling: LabelingMap) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    per_level = []
    for lev in labeling.levels:
        if lev.degree == 1:
            per_level.append([((a,), (b,)) for a, b in _projective_pairs(lev.q)])
        else:
            q = lev.q
            field_elems = [(v1, v0) for v1 in range(q) for v0 in range(q)]
            per_level.append([((0, 1), e) for e in field_elems] + [((0, 0), (0, 1))])
    out = []
    for combo in product(*per_level):
        b1 = tuple(x for part in combo for x in part[0])
        b2 = tuple(x for part in combo for x in part[1])
        out.append((b1, b2))
    return out


def maximize_coeffs_mi(cfg: ChannelConfig, labeling: LabelingMap, mode: str, n_samples: int, seed: int):
    """Exhaustive coefficient search on common random numbers.

    ``direct`` returns ((b1, b2), RateEstimate) over label-ring pairs.  The
    level modes choose pairs level by level, each conditioned on the choices
    already made, and return (FunctionCoeffs, MlcRates).  Pairs are searched up
    to a common nonzero scalar (the first nonzero coefficient is one).
    """
    smp = _Samples.draw(cfg, labeling, n_samples, seed)
    if mode == "direct":
        cands = _ring_pairs(labeling)
        if len(cands) > SEARCH_BUDGET:
            raise BudgetExceededError(f"{len(cands)} direct candidates exceed {SEARCH_BUDGET}")
        best = None
        for b1, b2 in cands:
            est = _estimate(_information(smp, smp.model.sums, _direct_targets(labeling, smp.model, b1, b2)), smp)
            if best is None or est.bits > best[1].bits:
                best = ((b1, b2), est)
        return best
    if mode not in ("mlc", "sub", "para"):
        raise ValueError(f"unknown mode {mode!r}")
    chosen: list[tuple[int, int]] = []
    L = labeling.n_components
    for l in range(L):
        q = labeling.moduli[l]
        if q * q > LEVEL_SEARCH_BUDGET:
            raise BudgetExceededError(f"level search over F_{q} exceeds {LEVEL_SEARCH_BUDGET}")
        best = None
        for pair in _projective_pairs(q):
            trial = chosen + [pair] + [(1, 1)] * (L - l - 1)
            contrib = _level_contributions_upto(smp, labeling, FunctionCoeffs(tuple(trial)), mode, l)
            est = _estimate(contrib, smp)
            if best is None or est.bits > best[1].bits:
                best = (pair, est)
        chosen.append(best[0])
    coeffs = FunctionCoeffs(tuple(chosen))
    contribs = _level_contributions(smp, labeling, coeffs, mode)
    levels = tuple(_estimate(c, smp) for c in contribs)
    return coeffs, MlcRates(mode, levels, _estimate(np.sum(contribs, axis=0), smp))


def _level_contributions_upto(smp, labeling, coeffs, mode, l) -> np.ndarray:
    """Contribution of level l only (earlier levels enter through conditioning)."""
    model = smp.model
    fvals = model.functions(coeffs)
    L = fvals.shape[1]
    if mode == "mlc":
        return _information(smp, model.sums, fvals[:, l], model.prefix_index(fvals, l))
    folds = fold_lattices(labeling)
    if mode == "sub":
        gens = level_generators(labeling)
        shifted = model.sums - sum(gens[s] * fvals[:, s] for s in range(l))
        return _information(smp, shifted, fvals[:, l], fold=folds[l] if l < L - 1 else None)
    level_generators(labeling)
    return _information(smp, model.sums, fvals[:, l], fold=folds[l] if L > 1 else None)


# ---------------------------------------------------------------------------
# sweeps

RESULT_COLUMNS = ("snr_db", "realization", "mode", "level", "rate", "stderr", "n_samples")


@dataclass(frozen=True)
class ResultRow:
    snr_db: float
    realization: int
    mode: str
    level: str
    rate: float
    stderr: float
    n_samples: int

    def as_tuple(self) -> tuple:
        return (self.snr_db, self.realization, self.mode, self.level, self.rate, self.stderr, self.n_samples)


@dataclass(frozen=True, eq=False)
class SweepConfig:
    """One labeling, an SNR grid, channel realizations and the estimators to run.

    ``coefficients`` is "search" or a dict with optional keys ``levels``
    (per-level pairs) and ``direct`` (two label tuples).
    """

    labeling: LabelingMap
    snr_grid_db: tuple[float, ...]
    channels: tuple[tuple[complex, ...], ...]
    modes: tuple[str, ...]
    n_samples: int
    seed: int
    coefficients: str | dict = "search"

    def __post_init__(self):
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")


def random_channels(count: int, seed: int, K: int = 2) -> tuple[tuple[complex, ...], ...]:
    """``count`` i.i.d. CN(0, 1) gain vectors."""
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((count, K)) + 1j * rng.standard_normal((count, K))) / math.sqrt(2.0)
    return tuple(tuple(complex(x) for x in row) for row in g)


def cell_seed(master: int, cell: int) -> int:
    return int(np.random.SeedSequence([master, cell]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _run_cell(cfg: SweepConfig, snr_db: float, r: int, h: tuple[complex, ...], seed: int) -> list[ResultRow]:
    chan = ChannelConfig.from_snr_db(h, snr_db)
    rows = []
    fixed = cfg.coefficients if isinstance(cfg.coefficients, dict) else None
    for mode in cfg.modes:
        if mode == "direct":
            if fixed and "direct" in fixed:
                b1, b2 = fixed["direct"]
                est = mi_direct(chan, cfg.labeling, b1, b2, cfg.n_samples, seed)
            else:
                _, est = maximize_coeffs_mi(chan, cfg.labeling, "direct", cfg.n_samples, seed)
            rows.append(ResultRow(snr_db, r, mode, "sum", est.bits, est.stderr, est.n_samples))
            continue
        if fixed and "levels" in fixed:
            res = mi_mlc(chan, cfg.labeling, FunctionCoeffs(tuple(map(tuple, fixed["levels"]))), cfg.n_samples, seed, mode)
        else:
            _, res = maximize_coeffs_mi(chan, cfg.labeling, mode, cfg.n_samples, seed)
        for l, est in enumerate(res.levels):
            rows.append(ResultRow(snr_db, r, mode, str(l + 1), est.bits, est.stderr, est.n_samples))
        rows.append(ResultRow(snr_db, r, mode, "sum", res.total.bits, res.total.stderr, res.total.n_samples))
    return rows


def sweep(cfg: SweepConfig, threads: int = 1) -> list[ResultRow]:
    """Run every (SNR, realization) cell with its own derived seed; row order is fixed."""
    cells = [
        (snr, r, h, cell_seed(cfg.seed, i * len(cfg.channels) + r))
        for i, snr in enumerate(cfg.snr_grid_db)
        for r, h in enumerate(cfg.channels)
    ]
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda c: _run_cell(cfg, *c), cells))
    else:
        parts = [_run_cell(cfg, *c) for c in cells]
    return [row for part in parts for row in part]

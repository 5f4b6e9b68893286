"""Multilevel encoder and the three compute-and-forward decoders.

Each label component is one coding level over F_{q_l}.  Two users transmit
x_k = gamma * M(c_k^1, ..., c_k^L) and the relay observes
y = h_1 x_1 + h_2 x_2 + z.  At level l the relay wants the function word
b_1^l c_1^l + b_2^l c_2^l over F_{q_l}.

* multistage: exact APPs over label pairs, conditioned on earlier decisions;
* suboptimal: subtract earlier decisions and fold modulo phi_l (last level unfolded);
* parallel: fold y modulo phi_l independently at every level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constellation import MODULE_ISO_GENERAL, LabelingMap
from .lattice import CODEBOOK_BUDGET, BudgetExceededError, LinearCode, rank_mod_p
from .likelihood import FoldLattice, PointSet, posterior

DECODER_BUDGET = 10**5


class LabelingKindError(ValueError):
    """A decoder was used with a labeling it is not defined for."""


@dataclass(frozen=True, eq=False)
class MlcEncoderConfig:
    labeling: LabelingMap
    codes: tuple[LinearCode, ...]
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(self.codes))
        moduli = self.labeling.moduli
        if len(self.codes) != len(moduli):
            raise ValueError(f"need {len(moduli)} codes, one per label component")
        for c, q in zip(self.codes, moduli):
            if c.q != q:
                raise ValueError(f"code over F_{c.q} used for a level over F_{q}")
        if len({c.N for c in self.codes}) != 1:
            raise ValueError("all level codes must have the same length")

    @classmethod
    def uncoded(cls, labeling: LabelingMap, N: int = 1, gamma: float = 1.0) -> "MlcEncoderConfig":
        return cls(labeling, tuple(LinearCode.identity(q, N) for q in labeling.moduli), gamma)

    @property
    def N(self) -> int:
        return self.codes[0].N

    @property
    def n_levels(self) -> int:
        return len(self.codes)


@dataclass(frozen=True)
class FunctionCoeffs:
    """Per-level coefficient pairs (b_1^l, b_2^l)."""

    levels: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple((int(a), int(b)) for a, b in self.levels))

    def check(self, moduli: Sequence[int]) -> None:
        if len(self.levels) != len(moduli):
            raise ValueError(f"need {len(moduli)} coefficient pairs")
        for (b1, b2), q in zip(self.levels, moduli):
            if b1 % q == 0 and b2 % q == 0:
                raise ValueError("coefficient pair (0, 0) has no decodable function")


@dataclass(frozen=True)
class SymbolPosterior:
    level: int
    pmf: np.ndarray

    @property
    def log_pmf(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pmf)


# ---------------------------------------------------------------------------
# pair model


@dataclass(frozen=True, eq=False)
class PairModel:
    """All label pairs of two users: noiseless sums and per-level function values."""

    labeling: LabelingMap
    h: tuple[complex, complex]
    sums: np.ndarray  # (n^2,) h1*M(u) + h2*M(v), unscaled
    labels1: np.ndarray  # (n^2, n_levels)
    labels2: np.ndarray

    @classmethod
    def build(cls, labeling: LabelingMap, h: Sequence[complex]) -> "PairModel":
        if len(h) != 2:
            raise ValueError("two users are supported")
        pts = labeling.point_table
        n = pts.size
        lab = labeling.label_table
        i, j = np.divmod(np.arange(n * n), n)
        sums = complex(h[0]) * pts[i] + complex(h[1]) * pts[j]
        return cls(labeling, (complex(h[0]), complex(h[1])), sums, lab[i], lab[j])

    def functions(self, coeffs: FunctionCoeffs) -> np.ndarray:
        """(n^2, n_levels) function values b1*c1 + b2*c2 per level."""
        q = np.array(self.labeling.moduli)
        b1 = np.array([b[0] for b in coeffs.levels])
        b2 = np.array([b[1] for b in coeffs.levels])
        return (b1 * self.labels1 + b2 * self.labels2) % q

    def prefix_index(self, values: np.ndarray, level: int) -> np.ndarray:
        """Mixed-radix index of the first ``level`` columns of values."""
        idx = np.zeros(values.shape[0], dtype=np.int64)
        for l in range(level):
            idx = idx * self.labeling.moduli[l] + values[:, l]
        return idx


def level_generators(labeling: LabelingMap) -> list[complex]:
    if labeling.kind != MODULE_ISO_GENERAL:
        raise LabelingKindError("successive folding decoders need the module-iso-general labeling")
    if any(lev.degree != 1 for lev in labeling.levels):
        raise LabelingKindError("successive folding decoders need prime residue fields")
    return [complex(g) for g in labeling.generators]


def fold_lattices(labeling: LabelingMap) -> list[FoldLattice]:
    return [FoldLattice.of(lev.prime.element) for lev in labeling.levels]


# ---------------------------------------------------------------------------
# encoder


def mlc_encode(streams: Sequence[Sequence[int]], cfg: MlcEncoderConfig) -> np.ndarray:
    """x[n] = gamma * M(c^1[n], ..., c^L[n]) with c^l = G^l w^l."""
    if len(streams) != cfg.n_levels:
        raise ValueError(f"need {cfg.n_levels} streams")
    words = np.stack([code.encode(w) for code, w in zip(cfg.codes, streams)], axis=1)
    lm = cfg.labeling
    idx = np.array([lm.label_index(row) for row in words])
    return cfg.gamma * lm.point_table[idx]


# ---------------------------------------------------------------------------
# per-level posteriors


def _multistage_posteriors(
    y: np.ndarray, level: int, prefix: np.ndarray, model: PairModel, fvals: np.ndarray, sigma2: float
) -> np.ndarray:
    q = model.labeling.moduli[level]
    out = np.empty((y.size, q))
    cond_pairs = model.prefix_index(fvals, level)
    cond_obs = model.prefix_index(prefix, level) if level else np.zeros(y.size, dtype=np.int64)
    for c in np.unique(cond_obs):
        sel = cond_obs == c
        members = cond_pairs == c
        if not members.any():
            out[sel] = 1.0 / q  # inconsistent prefix, no information left
            continue
        pset = PointSet.compress(model.sums[members], fvals[members, level], q)
        out[sel] = posterior(y[sel], pset, sigma2)
    return out


def app_level(
    y_n: complex,
    level: int,
    decoded_prefix: Sequence[int],
    h: Sequence[complex],
    coeffs: FunctionCoeffs,
    cfg: MlcEncoderConfig,
    noise_var: float = 1.0,
) -> SymbolPosterior:
    """Posterior of the level-``level`` function value for one received symbol (0-based level)."""
    lm = cfg.labeling
    b1, b2 = coeffs.levels[level]
    if b1 % lm.moduli[level] == 0 and b2 % lm.moduli[level] == 0:
        raise ValueError("coefficient pair (0, 0) has no decodable function")
    if len(decoded_prefix) != level:
        raise ValueError(f"prefix must have {level} entries")
    model = PairModel.build(lm, h)
    fvals = model.functions(coeffs)
    prefix = np.array([list(decoded_prefix)], dtype=np.int64).reshape(1, level)
    y = np.array([complex(y_n) / cfg.gamma])
    pmf = _multistage_posteriors(y, level, prefix, model, fvals, noise_var / cfg.gamma**2)[0]
    return SymbolPosterior(level, pmf)


def _decide(logpost: np.ndarray, code: LinearCode) -> np.ndarray:
    """ML codeword from per-symbol log posteriors (symbolwise for identity codes)."""
    if code.m == code.N and rank_mod_p(code.G, code.q) == code.N:
        return np.argmax(logpost, axis=1)
    if code.size > min(DECODER_BUDGET, CODEBOOK_BUDGET):
        raise BudgetExceededError(f"codebook of size {code.size} exceeds {DECODER_BUDGET}")
    book = code.codewords()
    scores = logpost[np.arange(code.N)[None, :], book].sum(axis=1)
    return book[int(np.argmax(scores))]


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def _prepare(y, cfg: MlcEncoderConfig, h, coeffs: FunctionCoeffs):
    coeffs.check(cfg.labeling.moduli)
    y = np.asarray(y, dtype=complex).reshape(-1)
    if y.size != cfg.N:
        raise ValueError(f"expected {cfg.N} received symbols")
    model = PairModel.build(cfg.labeling, h)
    return y / cfg.gamma, model, model.functions(coeffs)


def multistage_decode(
    y, cfg: MlcEncoderConfig, h, coeffs: FunctionCoeffs, noise_var: float = 1.0, trace: list | None = None
) -> list[np.ndarray]:
    """Decode the function word of every level, each stage conditioned on earlier ones."""
    ys, model, fvals = _prepare(y, cfg, h, coeffs)
    sigma2 = noise_var / cfg.gamma**2
    decided = np.zeros((ys.size, 0), dtype=np.int64)
    words = []
    for l, code in enumerate(cfg.codes):
        post = _multistage_posteriors(ys, l, decided, model, fvals, sigma2)
        if trace is not None:
            trace.append({"decoder": "multistage", "level": l, "posteriors": post.tolist()})
        w = _decide(_log(post), code)
        words.append(w)
        decided = np.column_stack([decided, w])
    return words


def _folded_posteriors(y_obs, residual, targets, q, sigma2, fold):
    pset = PointSet.compress(residual, targets, q, fold)
    return posterior(y_obs, pset, sigma2, fold)


def suboptimal_decode(
    y, cfg: MlcEncoderConfig, h, coeffs: FunctionCoeffs, noise_var: float = 1.0, trace: list | None = None
) -> list[np.ndarray]:
    """Successive decoder: subtract decided levels, fold modulo phi_l, detect."""
    gens = level_generators(cfg.labeling)
    folds = fold_lattices(cfg.labeling)
    ys, model, fvals = _prepare(y, cfg, h, coeffs)
    sigma2 = noise_var / cfg.gamma**2
    L = cfg.n_levels
    shift_pairs = np.zeros(model.sums.size, dtype=complex)
    shift_obs = np.zeros(ys.size, dtype=complex)
    words = []
    for l, code in enumerate(cfg.codes):
        fold = folds[l] if l < L - 1 else None
        q = cfg.labeling.moduli[l]
        post = _folded_posteriors(ys - shift_obs, model.sums - shift_pairs, fvals[:, l], q, sigma2, fold)
        if trace is not None:
            trace.append({"decoder": "suboptimal", "level": l, "posteriors": post.tolist()})
        w = _decide(_log(post), code)
        words.append(w)
        shift_pairs = shift_pairs + gens[l] * fvals[:, l]
        shift_obs = shift_obs + gens[l] * w
    return words


def parallel_decode(
    y, cfg: MlcEncoderConfig, h, coeffs: FunctionCoeffs, noise_var: float = 1.0, trace: list | None = None
) -> list[np.ndarray]:
    """Every level folds y/gamma modulo its own prime and decides on its own."""
    level_generators(cfg.labeling)
    folds = fold_lattices(cfg.labeling)
    ys, model, fvals = _prepare(y, cfg, h, coeffs)
    sigma2 = noise_var / cfg.gamma**2
    words = []
    for l, code in enumerate(cfg.codes):
        fold = folds[l] if cfg.n_levels > 1 else None
        post = _folded_posteriors(ys, model.sums, fvals[:, l], cfg.labeling.moduli[l], sigma2, fold)
        if trace is not None:
            trace.append({"decoder": "parallel", "level": l, "posteriors": post.tolist()})
        words.append(_decide(_log(post), code))
    return words


# ---------------------------------------------------------------------------
# flexible decoding


def extfield_matrix(b: Sequence[int], poly: tuple[int, int], q: int) -> np.ndarray:
    """Matrix of multiplication by b = b1*x + b0 on coefficient vectors (c1, c0)."""
    b1, b0 = b
    c1, c0 = poly
    return np.array([[b0 - c1 * b1, b1], [-c0 * b1, b0]], dtype=np.int64) % q


def check_flexible(B1, B2, q: int) -> tuple[np.ndarray, np.ndarray]:
    B1 = np.array(B1, dtype=np.int64).reshape(2, 2) % q
    B2 = np.array(B2, dtype=np.int64).reshape(2, 2) % q
    if rank_mod_p(np.hstack([B1, B2]), q) != 2:
        raise ValueError("combination matrix [B1 B2] is rank deficient")
    return B1, B2


def flexible_targets(c11, c12, c21, c22, B1, B2, q: int) -> tuple[np.ndarray, np.ndarray]:
    """[c_R^1; c_R^2] = B1 [c_1^1; c_1^2] + B2 [c_2^1; c_2^2] over F_q, per symbol."""
    B1, B2 = check_flexible(B1, B2, q)
    u = np.stack([np.asarray(c11), np.asarray(c12)])
    v = np.stack([np.asarray(c21), np.asarray(c22)])
    r = (B1 @ u + B2 @ v) % q
    return r[0], r[1]

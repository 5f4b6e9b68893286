import math
from itertools import product

import numpy as np
import pytest

from cfmlc.algebra import EISENSTEIN, INTEGERS, PrimeSpec, element, ext_mul, residue_of_generator
from cfmlc.constellation import (
    CRT_RING_ISO,
    EXTFIELD_RING_ISO,
    MODULE_ISO_GENERAL,
    ConstellationSpec,
    build_constellation,
    make_labeling,
)
from cfmlc.lattice import LinearCode, ProductLattice
from cfmlc.likelihood import FoldLattice, PointSet, posterior
from cfmlc.mlc import (
    FunctionCoeffs,
    LabelingKindError,
    MlcEncoderConfig,
    PairModel,
    app_level,
    check_flexible,
    extfield_matrix,
    flexible_targets,
    mlc_encode,
    multistage_decode,
    parallel_decode,
    suboptimal_decode,
)

E = EISENSTEIN
C21 = ((2, 1), (3, 2))


def labeling(elements, kind, ring=E):
    return make_labeling(build_constellation(ConstellationSpec.from_elements(ring, elements)), kind)


@pytest.fixture(scope="module")
def crt21():
    return labeling(C21, CRT_RING_ISO)


@pytest.fixture(scope="module")
def gen21():
    return labeling(C21, MODULE_ISO_GENERAL)


def all_pairs(lm):
    labels = list(product(*(range(q) for q in lm.moduli)))
    return [(u, v) for u in labels for v in labels]


def transmit(lm, pairs, h, gamma=1.0):
    x1 = np.array([complex(lm.map(u)) for u, _ in pairs])
    x2 = np.array([complex(lm.map(v)) for _, v in pairs])
    return gamma * (h[0] * x1 + h[1] * x2)


def function_words(lm, pairs, coeffs):
    out = []
    for l, (q, (b1, b2)) in enumerate(zip(lm.moduli, coeffs.levels)):
        out.append(np.array([(b1 * u[l] + b2 * v[l]) % q for u, v in pairs]))
    return out


# --- encoder -------------------------------------------------------------------


def test_encode_zero_streams(crt21):
    cfg = MlcEncoderConfig.uncoded(crt21, N=5, gamma=2.0)
    assert np.allclose(mlc_encode([[0] * 5, [0] * 5], cfg), 0.0)


def test_encode_worked_example(crt21):
    cfg = MlcEncoderConfig.uncoded(crt21, N=1, gamma=0.5)
    assert mlc_encode([[1], [1]], cfg)[0] == pytest.approx(0.5)
    assert mlc_encode([[2], [6]], cfg)[0] == pytest.approx(-0.5)


def test_encode_linear_in_labels(crt21):
    cfg = MlcEncoderConfig(crt21, (LinearCode(3, [[1], [2], [0]]), LinearCode(7, [[1, 0], [3, 1], [0, 5]])))
    rng = np.random.default_rng(0)
    const = crt21.constellation
    for _ in range(20):
        w1 = [rng.integers(0, 3, 1), rng.integers(0, 7, 2)]
        w2 = [rng.integers(0, 3, 1), rng.integers(0, 7, 2)]
        ws = [(w1[0] + w2[0]) % 3, (w1[1] + w2[1]) % 7]
        a, b, s = mlc_encode(w1, cfg), mlc_encode(w2, cfg), mlc_encode(ws, cfg)
        for xa, xb, xs in zip(a, b, s):
            pa, pb = const.points[int(np.argmin(np.abs(const.complex_points - xa)))], const.points[int(np.argmin(np.abs(const.complex_points - xb)))]
            assert complex(const.representative(pa + pb)) == pytest.approx(xs)


def test_encoder_config_validation(crt21):
    with pytest.raises(ValueError):
        MlcEncoderConfig(crt21, (LinearCode.identity(3, 2),))
    with pytest.raises(ValueError):
        MlcEncoderConfig(crt21, (LinearCode.identity(7, 2), LinearCode.identity(3, 2)))
    with pytest.raises(ValueError):
        mlc_encode([[0, 0]], MlcEncoderConfig.uncoded(crt21, 2))


# --- posteriors ----------------------------------------------------------------


def brute_app(lm, y, level, prefix, h, coeffs, noise_var):
    """Direct sum over every label pair consistent with the prefix."""
    mass = np.zeros(lm.moduli[level])
    for u, v in all_pairs(lm):
        f = [(b1 * u[s] + b2 * v[s]) % q for s, (q, (b1, b2)) in enumerate(zip(lm.moduli, coeffs.levels))]
        if any(f[s] != prefix[s] for s in range(level)):
            continue
        d = y - h[0] * complex(lm.map(u)) - h[1] * complex(lm.map(v))
        mass[f[level]] += math.exp(-abs(d) ** 2 / noise_var)
    return mass / mass.sum()


@pytest.mark.parametrize("level,prefix", [(0, ()), (1, (0,)), (1, (2,))])
def test_app_level_matches_direct_sum(crt21, level, prefix):
    h = (1.0, complex(element(E, 0, 1)))
    coeffs = FunctionCoeffs(((1, 1), (1, 2)))
    cfg = MlcEncoderConfig.uncoded(crt21)
    for y in (0.3 - 0.2j, 1.0 - complex(element(E, 0, 1)), 2.5 + 1j):
        got = app_level(y, level, prefix, h, coeffs, cfg, noise_var=0.7)
        want = brute_app(crt21, y, level, prefix, h, coeffs, 0.7)
        assert np.allclose(got.pmf, want, atol=1e-12)
        assert got.pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_app_level_worked_example(crt21):
    """Noiseless 1 - w with h = (1, w) concentrates on (0, 6) over the two stages."""
    h = (1.0, complex(element(E, 0, 1)))
    coeffs = FunctionCoeffs(((1, 1), (1, 2)))
    cfg = MlcEncoderConfig.uncoded(crt21)
    y = complex(element(E, 1, -1))
    p0 = app_level(y, 0, (), h, coeffs, cfg, noise_var=1e-4)
    assert int(np.argmax(p0.pmf)) == 0 and p0.pmf[0] > 1 - 1e-9
    p1 = app_level(y, 1, (0,), h, coeffs, cfg, noise_var=1e-4)
    assert int(np.argmax(p1.pmf)) == 6 and p1.pmf[6] > 1 - 1e-9
    assert np.isfinite(p1.log_pmf[6])


def test_app_level_no_signal_is_uniform(crt21):
    cfg = MlcEncoderConfig.uncoded(crt21)
    p = app_level(0.7 + 0.1j, 1, (1,), (0.0, 0.0), FunctionCoeffs(((1, 1), (1, 1))), cfg)
    assert np.allclose(p.pmf, 1 / 7)


def test_app_level_rejects_zero_pair(crt21):
    cfg = MlcEncoderConfig.uncoded(crt21)
    with pytest.raises(ValueError):
        app_level(0j, 0, (), (1, 1), FunctionCoeffs(((0, 3), (1, 1))), cfg)
    with pytest.raises(ValueError):
        app_level(0j, 1, (), (1, 1), FunctionCoeffs(((1, 1), (1, 1))), cfg)


def test_partition_identity(crt21):
    """Masses split by function value add up to the full pair likelihood."""
    h = (1.0, 0.8 - 0.3j)
    model = PairModel.build(crt21, h)
    f = model.functions(FunctionCoeffs(((1, 2), (3, 1))))[:, 1]
    y = np.array([0.4 + 0.9j])
    full = np.exp(-np.abs(y[0] - model.sums) ** 2 / 0.5)
    per = np.array([full[f == c].sum() for c in range(7)])
    pset = PointSet.compress(model.sums, f, 7)
    post = posterior(y, pset, 0.5)[0]
    assert per.sum() == pytest.approx(full.sum(), rel=1e-12)
    assert np.allclose(post, per / full.sum(), atol=1e-12)


def test_posterior_regular_under_label_shift(gen21):
    """Modulo Phi, shifting y by M(d) shifts the posterior index by b1 * d."""
    model = PairModel.build(gen21, (1.0, 1.0))
    b = (2, 5)
    f = model.functions(FunctionCoeffs(((1, 1), b)))[:, 1]
    fold = FoldLattice.of(gen21.constellation.modulus)
    pset = PointSet.compress(model.sums, f, 7, fold)
    y = np.array([0.3 + 0.4j, -1.1 + 2.0j])
    base = posterior(y, pset, 0.6, fold)
    for d in [(0, 1), (1, 3), (2, 6)]:
        shifted = posterior(y + complex(gen21.map(d)), pset, 0.6, fold)
        expect = np.roll(base, b[0] * d[1] % 7, axis=1)
        assert np.allclose(shifted, expect, atol=1e-10)


# --- decoders ------------------------------------------------------------------


def test_multistage_worked_example(crt21):
    h = (1.0, complex(element(E, 0, 1)))
    cfg = MlcEncoderConfig.uncoded(crt21, N=1)
    words = multistage_decode([complex(element(E, 1, -1))], cfg, h, FunctionCoeffs(((1, 1), (1, 2))), noise_var=1e-4)
    assert [w.tolist() for w in words] == [[0], [6]]


def test_multistage_ring_coefficients_exhaustive(crt21):
    """With h = (1, w) the function at level l uses the residue of w mod phi_l."""
    r = [residue_of_generator(PrimeSpec.from_element(element(E, *p))) for p in C21]
    coeffs = FunctionCoeffs(((1, r[0]), (1, r[1])))
    h = (1.0, complex(element(E, 0, 1)))
    pairs = all_pairs(crt21)
    cfg = MlcEncoderConfig.uncoded(crt21, N=len(pairs))
    words = multistage_decode(transmit(crt21, pairs, h), cfg, h, coeffs, noise_var=1e-6)
    for got, want in zip(words, function_words(crt21, pairs, coeffs)):
        assert np.array_equal(got, want)


def test_multistage_single_user(crt21):
    cfg = MlcEncoderConfig(crt21, (LinearCode(3, [[1], [1], [2], [0]]), LinearCode(7, [[1, 0], [0, 1], [1, 1], [2, 5]])))
    w = [[2], [3, 4]]
    x = mlc_encode(w, cfg)
    words = multistage_decode(x, cfg, (1.0, 0.0), FunctionCoeffs(((1, 0), (1, 0))), noise_var=1e-4)
    assert words[0].tolist() == cfg.codes[0].encode(w[0]).tolist()
    assert words[1].tolist() == cfg.codes[1].encode(w[1]).tolist()


def test_multistage_matches_lattice_decomposition():
    """Integer signals: the decoded words equal the level words of the decomposition."""
    lm = labeling(((2, 0), (3, 0)), CRT_RING_ISO, ring=INTEGERS)
    lat = ProductLattice((2, 3), (LinearCode(2, [[1], [1]]), LinearCode(3, [[1], [2]])))
    cfg = MlcEncoderConfig(lm, lat.codes)
    x1, x2 = mlc_encode([[1], [1]], cfg), mlc_encode([[0], [2]], cfg)
    y = 3 * x1 + 4 * x2
    # level l decodes 3 c_1 + 4 c_2 over F_{p_l}
    coeffs = FunctionCoeffs(((3 % 2, 4 % 2), (3 % 3, 4 % 3)))
    words = multistage_decode(y, cfg, (3.0, 4.0), coeffs, noise_var=1e-6)
    lattice_words, _ = lat.decompose(np.round(y.real).astype(np.int64))
    assert [w.tolist() for w in words] == [w.tolist() for w in lattice_words]


@pytest.mark.parametrize("coeffs", [((1, 1), (1, 1)), ((2, 2), (1, 1)), ((1, 1), (3, 3))])
def test_decoders_agree_noiseless(gen21, coeffs):
    coeffs = FunctionCoeffs(coeffs)
    pairs = all_pairs(gen21)
    h = (1.0, 1.0)
    want = function_words(gen21, pairs, coeffs)
    cfg = MlcEncoderConfig.uncoded(gen21, N=len(pairs))
    y = transmit(gen21, pairs, h)
    for dec in (multistage_decode, suboptimal_decode, parallel_decode):
        got = dec(y, cfg, h, coeffs, noise_var=1e-6)
        for g, w in zip(got, want):
            assert np.array_equal(g, w), dec.__name__


def test_decoders_agree_in_blocks_of_four(gen21):
    coeffs = FunctionCoeffs(((1, 1), (1, 1)))
    rng = np.random.default_rng(2)
    cfg = MlcEncoderConfig.uncoded(gen21, N=4)
    pairs = all_pairs(gen21)
    for _ in range(25):
        block = [pairs[i] for i in rng.integers(len(pairs), size=4)]
        y = transmit(gen21, block, (1.0, 1.0))
        ref = multistage_decode(y, cfg, (1, 1), coeffs, noise_var=1e-6)
        for dec in (suboptimal_decode, parallel_decode):
            got = dec(y, cfg, (1, 1), coeffs, noise_var=1e-6)
            assert all(np.array_equal(a, b) for a, b in zip(got, ref))


def test_suboptimal_periodic_in_modulus(gen21):
    """Folded stages are Phi-periodic; the last stage is unfolded by design."""
    coeffs = FunctionCoeffs(((1, 1), (1, 1)))
    rng = np.random.default_rng(8)
    pairs = all_pairs(gen21)
    gamma = 1.3
    cfg = MlcEncoderConfig.uncoded(gen21, N=30, gamma=gamma)
    block = [pairs[i] for i in rng.integers(len(pairs), size=30)]
    y = transmit(gen21, block, (1.0, 1.0), gamma) + 0.6 * (rng.standard_normal(30) + 1j * rng.standard_normal(30))
    phi = gen21.constellation.modulus
    base = suboptimal_decode(y, cfg, (1, 1), coeffs, noise_var=0.72)
    for z in [(1, 0), (-2, 3), (4, 1)]:
        shift = gamma * complex(phi * element(E, *z))
        moved = suboptimal_decode(y + shift, cfg, (1, 1), coeffs, noise_var=0.72)
        assert all(np.array_equal(a, b) for a, b in zip(base[:-1], moved[:-1]))


def test_parallel_level_independent_of_other_levels(gen21):
    """Noiseless level-l decisions depend only on the level-l labels."""
    coeffs = FunctionCoeffs(((1, 1), (1, 1)))
    cfg = MlcEncoderConfig.uncoded(gen21, N=7)
    for u1, v1 in [(0, 0), (1, 2), (2, 2)]:
        block = [((u1, t), (v1, (3 * t) % 7)) for t in range(7)]
        words = parallel_decode(transmit(gen21, block, (1, 1)), cfg, (1, 1), coeffs, noise_var=1e-6)
        assert set(words[0].tolist()) == {(u1 + v1) % 3}


def test_single_level_decoders_identical():
    lm = labeling(((3, 2),), MODULE_ISO_GENERAL)
    coeffs = FunctionCoeffs(((1, 1),))
    rng = np.random.default_rng(3)
    cfg = MlcEncoderConfig.uncoded(lm, N=40)
    y = rng.normal(size=40) * 2 + 1j * rng.normal(size=40) * 2
    ref = multistage_decode(y, cfg, (1, 1), coeffs, noise_var=0.5)
    for dec in (suboptimal_decode, parallel_decode):
        assert np.array_equal(dec(y, cfg, (1, 1), coeffs, noise_var=0.5)[0], ref[0])


def test_folding_decoders_need_general_labeling(crt21):
    cfg = MlcEncoderConfig.uncoded(crt21)
    with pytest.raises(LabelingKindError):
        suboptimal_decode([0j], cfg, (1, 1), FunctionCoeffs(((1, 1), (1, 1))))
    with pytest.raises(LabelingKindError):
        parallel_decode([0j], cfg, (1, 1), FunctionCoeffs(((1, 1), (1, 1))))


def test_codebook_ml_decision(crt21):
    """A repetition code corrects a single strong error that symbolwise MAP would not."""
    cfg = MlcEncoderConfig(crt21, (LinearCode(3, [[1], [1], [1]]), LinearCode(7, [[1], [1], [1]])))
    coeffs = FunctionCoeffs(((1, 0), (1, 0)))
    x = mlc_encode([[2], [5]], cfg)
    x[1] = complex(crt21.map((0, 0)))
    words = multistage_decode(x, cfg, (1, 0), coeffs, noise_var=0.05)
    assert words[0].tolist() == [2, 2, 2] and words[1].tolist() == [5, 5, 5]


def test_trace_records_posteriors(gen21):
    trace = []
    cfg = MlcEncoderConfig.uncoded(gen21, N=1)
    multistage_decode([0.5j], cfg, (1, 1), FunctionCoeffs(((1, 1), (1, 1))), trace=trace)
    assert [t["level"] for t in trace] == [0, 1]
    assert np.allclose(np.sum(trace[1]["posteriors"], axis=1), 1.0)


# --- flexible decoding -----------------------------------------------------------


def test_flexible_identity():
    rng = np.random.default_rng(0)
    c = rng.integers(0, 5, (4, 10))
    r1, r2 = flexible_targets(*c, np.eye(2, dtype=int), np.eye(2, dtype=int), 5)
    assert np.array_equal(r1, (c[0] + c[2]) % 5)
    assert np.array_equal(r2, (c[1] + c[3]) % 5)


def test_flexible_cross_level():
    rng = np.random.default_rng(1)
    c = rng.integers(0, 7, (4, 10))
    r1, r2 = flexible_targets(*c, np.eye(2, dtype=int), [[0, 1], [1, 0]], 7)
    assert np.array_equal(r1, (c[0] + c[3]) % 7)
    assert np.array_equal(r2, (c[1] + c[2]) % 7)


def test_flexible_rank_check():
    with pytest.raises(ValueError):
        check_flexible([[1, 2], [2, 4]], [[1, 1], [2, 2]], 5)
    # B1 singular but [B1 B2] full rank is allowed
    check_flexible([[1, 0], [0, 0]], [[0, 0], [0, 1]], 5)


def test_extfield_matrix_is_field_multiplication():
    poly, q = (2, 4), 5
    for b in product(range(q), repeat=2):
        B = extfield_matrix(b, poly, q)
        for c in product(range(q), repeat=2):
            assert tuple((B @ np.array(c)) % q) == ext_mul(b, c, poly, q)


def test_extfield_matrices_reproduce_field_combination():
    lm = labeling(((5, 0),), EXTFIELD_RING_ISO)
    poly = lm.levels[0].poly
    b1, b2 = (2, 3), (1, 4)
    B1, B2 = extfield_matrix(b1, poly, 5), extfield_matrix(b2, poly, 5)
    rng = np.random.default_rng(6)
    c = rng.integers(0, 5, (4, 12))
    r1, r2 = flexible_targets(*c, B1, B2, 5)
    for n in range(12):
        u, v = (int(c[0, n]), int(c[1, n])), (int(c[2, n]), int(c[3, n]))
        assert (r1[n], r2[n]) == lm.label_add(lm.label_mul(b1, u), lm.label_mul(b2, v))

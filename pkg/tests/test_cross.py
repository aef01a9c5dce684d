import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttpce.cross import (FunctionEvaluator, _init_state, _prepare_guess, block_cross,
                         block_cross_approximate, dmrg_cross, dmrg_cross_baseline, warmup_sweep)
from ttpce.errors import EvaluationError, InvalidInputError
from ttpce.tt import TTTensor, interface_submatrices, rank1, tt_entries, tt_random


def hilbert(idx):
    return 1.0 / (1.0 + idx.sum(1))


def hilbert_full(M, n):
    return 1.0 / (1.0 + sum(np.ix_(*[np.arange(n)] * M)))


def separable(M, n, seed=0):
    rng = np.random.default_rng(seed)
    vs = [0.5 + rng.random(n) for _ in range(M)]
    f = lambda idx: np.prod([v[idx[:, m]] for m, v in enumerate(vs)], 0)
    full = vs[0]
    for v in vs[1:]:
        full = np.multiply.outer(full, v)
    return f, full


def test_separable_rank_one():
    f, F = separable(4, 10)
    tt, info = block_cross(FunctionEvaluator(f, [10] * 4), 1e-8)
    assert tt.ranks == (1,) * 5
    assert info.iterations <= 2 and info.converged
    assert np.abs(tt.full() - F).max() <= 1e-12 * np.abs(F).max()


def test_hilbert_full_enumeration():
    F = hilbert_full(4, 10)
    tt, info = block_cross(FunctionEvaluator(hilbert, [10] * 4), 1e-8)
    assert np.linalg.norm(tt.full() - F) <= 1e-7 * np.linalg.norm(F)
    idx = np.random.default_rng(3).integers(0, 10, (500, 4))
    v = tt_entries(tt, idx)[:, 0, 0]
    ref = hilbert(idx)
    assert np.linalg.norm(v - ref) <= 1e-7 * np.linalg.norm(ref)


def test_block_border_layout():
    f = lambda idx: np.stack([hilbert(idx), 2 * hilbert(idx) + 1], 1)
    tt, _ = block_cross(FunctionEvaluator(f, [6] * 3, L=2), 1e-10)
    assert tt.ranks[0] == 2 and tt.ranks[-1] == 1
    F = hilbert_full(3, 6)
    assert np.allclose(tt.full()[0], F, atol=1e-9) and np.allclose(tt.full()[1], 2 * F + 1, atol=1e-9)


def test_single_mode():
    tt, info = block_cross(FunctionEvaluator(lambda i: i[:, 0] ** 2.0, [5]), 1e-8)
    assert np.allclose(tt.full(), np.arange(5) ** 2)


def test_warmup_interfaces_nonsingular():
    rng = np.random.default_rng(5)
    guess = tt_random([4, 4, 4], [2, 2], rng)
    state = _init_state(3)
    cores = warmup_sweep(_prepare_guess(guess, (4, 4, 4), rng), state, rng)
    x = TTTensor(cores)
    left, _ = interface_submatrices(x, state["I"], [None] * 4)
    for k in range(1, 3):
        assert abs(np.linalg.det(state["UL"][k])) > 1e-8
        assert np.allclose(left[k], state["UL"][k])


def test_warmup_rank_one_singletons():
    rng = np.random.default_rng(0)
    guess = rank1([np.ones(3) + k for k in range(4)])
    state = _init_state(4)
    warmup_sweep(_prepare_guess(guess, (3,) * 4, rng), state, rng)
    assert all(state["I"][k].shape == (1, k) for k in range(4))


def test_warmup_idempotent():
    rng = np.random.default_rng(2)
    guess = tt_random([4, 4, 4, 4], [2, 3, 2], rng)
    once = warmup_sweep(_prepare_guess(guess, (4,) * 4, rng), _init_state(4), rng)
    twice = warmup_sweep(once, _init_state(4), rng)
    for a, b in zip(once[:-1], twice[:-1]):
        assert np.linalg.norm(a) == pytest.approx(np.linalg.norm(b), rel=1e-12)


def test_nested_index_sets():
    ev = FunctionEvaluator(hilbert, [6] * 5)
    _, info = block_cross(ev, 1e-8)
    I, J = info.left_sets, info.right_sets
    for k in range(1, 5):
        prev = {tuple(r) for r in I[k - 1]}
        assert all(tuple(r[:-1]) in prev for r in I[k])
        nxt = {tuple(r) for r in J[k + 1]}
        assert all(tuple(r[1:]) in nxt for r in J[k])


def test_evaluation_accounting():
    ev = FunctionEvaluator(hilbert, [8] * 4)
    _, info = block_cross(ev, 1e-8)
    prev = 0
    for it, rmax, evals, _, _ in info.history[1:]:
        # one forward and one backward sweep over blocks of at most rmax x n x rmax
        assert evals - prev <= 2 * 4 * rmax * 8 * rmax
        prev = evals
    assert info.n_evals == ev.n_evals


def test_reproducible():
    runs = [block_cross(FunctionEvaluator(hilbert, [7] * 4), 1e-6, seed=11) for _ in range(2)]
    (a, ia), (b, ib) = runs
    assert a.ranks == b.ranks
    assert all(np.array_equal(x, y) for x, y in zip(a.cores, b.cores))
    assert all(np.array_equal(x, y) for x, y in zip(ia.left_sets[1:], ib.left_sets[1:]))


def test_nonfinite_value_reported():
    f = lambda idx: np.where(idx[:, 0] == 3, np.nan, 1.0)
    with pytest.raises(EvaluationError) as err:
        block_cross(FunctionEvaluator(f, [5] * 3), 1e-6)
    assert err.value.index[0] == 3


def test_bad_guess():
    with pytest.raises(InvalidInputError):
        block_cross(FunctionEvaluator(hilbert, [5] * 3), 1e-6, guess=rank1([np.ones(4)] * 3))


def test_dmrg_separable():
    f, F = separable(4, 8, seed=4)
    tt, _ = dmrg_cross(FunctionEvaluator(f, [8] * 4), 1e-8)
    assert tt.max_rank == 1 and np.allclose(tt.full(), F, rtol=1e-12)


def test_dmrg_matches_block():
    a = dmrg_cross_baseline(FunctionEvaluator(hilbert, [10] * 4), 1e-8)
    b = block_cross_approximate(FunctionEvaluator(hilbert, [10] * 4), 1e-8)
    F = hilbert_full(4, 10)
    assert np.linalg.norm(a.full() - b.full()) <= 2e-7 * np.linalg.norm(F)


def test_dmrg_rejects_block():
    with pytest.raises(InvalidInputError):
        dmrg_cross(FunctionEvaluator(lambda i: np.ones((len(i), 2)), [3] * 3, L=2))


@settings(max_examples=10)
@given(st.integers(2, 5), st.integers(2, 6), st.integers(0, 1000))
def test_sum_of_exponentials_property(M, n, seed):
    rng = np.random.default_rng(seed)
    a = rng.random(M)
    f = lambda idx: np.exp(-(idx * a).sum(1) / n) + 1.0
    tt, _ = block_cross(FunctionEvaluator(f, [n] * M), 1e-10, seed=seed)
    idx = np.array(list(itertools.product(range(n), repeat=M)))
    assert np.abs(tt_entries(tt, idx)[:, 0, 0] - f(idx)).max() <= 1e-8

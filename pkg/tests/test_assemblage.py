import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_quantum_assemblage
from poststeer.assemblage import (Assemblage, BipartiteAssemblage, MinimalFunctional, Scenario,
                                  ScenarioMismatch, SteeringFunctional, add_noise, behaviour,
                                  denoise, evaluate_functional, evaluate_minimal, expand_minimal,
                                  filter_back, lift_qutrit, minimal_form, prbox_distribution,
                                  prbox_product, product_assemblage, reconstruct_from_minimal,
                                  validate_bipartite_ns, validate_tripartite_ns)
from poststeer.fixtures import BETA_EXAMPLE, MU_OCTAGON, example_assemblage, example_functional
from poststeer.locality import octagon_set, projector

SC = Scenario(2)
seeds = st.integers(0, 2**32 - 1)


def random_minimal(rng, sc=SC, real=False):
    def herm(*shape):
        g = rng.standard_normal(shape + (sc.dimA, sc.dimA))
        if not real:
            g = g + 1j * rng.standard_normal(g.shape)
        return (g + np.conj(np.swapaxes(g, -1, -2))) / 2

    return MinimalFunctional(herm(), herm(sc.setB), herm(sc.setC), herm(sc.setB, sc.setC))


def random_functional(rng, sc=SC):
    g = rng.standard_normal(sc.block_shape) + 1j * rng.standard_normal(sc.block_shape)
    return SteeringFunctional(sc, (g + np.conj(np.swapaxes(g, -1, -2))) / 2)


# ---------------------------------------------------------------- types

def test_scenario_rejects_non_positive_fields():
    with pytest.raises(ValueError):
        Scenario(0)
    with pytest.raises(ValueError):
        Scenario(2, setB=0)


def test_assemblage_rejects_non_hermitian_blocks():
    blocks = np.zeros(SC.block_shape, dtype=complex)
    blocks[0, 0, 0, 0, 0, 1] = 1.0
    with pytest.raises(ValueError, match="Hermitian"):
        Assemblage(SC, blocks)


def test_assemblage_rejects_wrong_shape():
    with pytest.raises(ScenarioMismatch):
        Assemblage(SC, np.zeros((2, 2, 2, 2, 3, 3)))


def test_blocks_are_read_only():
    asm = example_assemblage()
    with pytest.raises(ValueError):
        asm.blocks[0, 0, 0, 0, 0, 0] = 1


# ---------------------------------------------------------------- validation

def test_example_passes_at_rounding_tolerance():
    assert validate_tripartite_ns(example_assemblage(), 1e-3).passed


def test_sign_flip_fails_positivity():
    blocks = np.array(example_assemblage().blocks)
    blocks[0, 0, 0, 0] *= -1
    report = validate_tripartite_ns(Assemblage(SC, blocks), 1e-3)
    assert "positivity" in report.failed()


def test_product_of_ns_distribution_passes_tightly(rng):
    rho = np.diag([0.3, 0.7])
    p = np.array([[[[prbox_distribution(y, z, b, c) for z in range(2)] for y in range(2)]
                   for c in range(2)] for b in range(2)])
    local = np.full((2, 2, 2, 2), 0.25)
    for q in (p, local, 0.4 * p + 0.6 * local):
        assert validate_tripartite_ns(product_assemblage(q, rho), 1e-12).passed


def test_bipartite_validation_examples():
    uniform = np.broadcast_to(np.eye(2) / 4, (2, 2, 2, 2))
    assert validate_bipartite_ns(BipartiteAssemblage(2, uniform)).passed

    bad = np.array([[np.eye(2), np.eye(2) / 2], [np.zeros((2, 2)), np.eye(2) / 2]])
    report = validate_bipartite_ns(BipartiteAssemblage(2, bad))
    assert "normalisation" in report.failed()


def test_example_bob_marginals_as_bipartite():
    asm = example_assemblage()
    marg = asm.bob_marginals()  # [b, y]
    assert validate_bipartite_ns(BipartiteAssemblage(2, marg), 1e-3).passed


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_valid_assemblages_have_setting_independent_marginals(seed):
    asm = random_quantum_assemblage(np.random.default_rng(seed))
    assert validate_tripartite_ns(asm).passed
    s = asm.blocks
    rho = s.sum(axis=(0, 1))
    assert np.max(np.abs(rho - rho[:1, :1])) <= 1e-10


# ---------------------------------------------------------------- functionals

def test_example_value():
    F = example_functional()
    asm = example_assemblage()
    assert abs(evaluate_minimal(F, asm) - BETA_EXAMPLE) <= 5e-3
    assert abs(evaluate_functional(expand_minimal(F), asm) - BETA_EXAMPLE) <= 5e-3


def test_zero_functionals_vanish():
    asm = example_assemblage()
    assert evaluate_functional(SteeringFunctional(SC, np.zeros(SC.block_shape)), asm) == 0
    z = np.zeros((2, 2))
    assert evaluate_minimal(MinimalFunctional(z, [z, z], [z, z], [[z, z], [z, z]]), asm) == 0


def test_delta_functional_reads_one_probability():
    ops = np.zeros(SC.block_shape)
    ops[0, 0, 0, 0] = np.eye(2)
    value = evaluate_functional(SteeringFunctional(SC, ops), example_assemblage())
    assert value == pytest.approx(0.2720, abs=1e-3)


def test_scenario_mismatch_is_an_error():
    F = SteeringFunctional(Scenario(3), np.zeros(Scenario(3).block_shape))
    with pytest.raises(ScenarioMismatch):
        evaluate_functional(F, example_assemblage())


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_minimal_formula_matches_direct_sum(seed):
    rng = np.random.default_rng(seed)
    Fm = random_minimal(rng)
    asm = random_quantum_assemblage(rng)
    direct = sum(np.trace(expand_minimal(Fm).operators[k] @ asm.blocks[k]) for k in SC.keys())
    assert evaluate_minimal(Fm, asm) == pytest.approx(direct.real, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_expand_then_collapse_is_identity(seed):
    Fm = random_minimal(np.random.default_rng(seed))
    back = minimal_form(expand_minimal(Fm))
    for a, b in [(Fm.F_A, back.F_A), (Fm.F_B, back.F_B), (Fm.F_C, back.F_C), (Fm.F_YZ, back.F_YZ)]:
        assert np.max(np.abs(a - b)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_gauge_freedom_leaves_beta_unchanged(seed):
    rng = np.random.default_rng(seed)
    F = random_functional(rng)
    gauge = F.operators - expand_minimal(minimal_form(F)).operators
    asm = random_quantum_assemblage(rng)
    assert evaluate_functional(SteeringFunctional(SC, gauge), asm) == pytest.approx(0, abs=1e-10)
    assert evaluate_functional(F, asm) == pytest.approx(evaluate_minimal(minimal_form(F), asm), abs=1e-10)


def test_expand_identity_spreads_uniformly():
    z = np.zeros((2, 2))
    F = expand_minimal(MinimalFunctional(np.eye(2), [z, z], [z, z], [[z, z], [z, z]]))
    assert np.allclose(F.operators, np.eye(2) / 4, atol=1e-15)


# ---------------------------------------------------------------- reconstruction

def test_reconstruct_uniform_product():
    q = np.eye(2) / 4
    asm = reconstruct_from_minimal(np.eye(2) / 2, [q, q], [[np.eye(2) / 8] * 2] * 2)
    assert np.allclose(asm.blocks, np.eye(2) / 8, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_reconstruct_round_trip(seed):
    asm = random_quantum_assemblage(np.random.default_rng(seed))
    rho, sb, sc, s00 = asm.reduced_state(), asm.bob_marginals()[0], asm.charlie_marginals()[0], asm.blocks[0, 0]
    back = reconstruct_from_minimal(rho, sb, s00, sigma_C0=sc)
    assert np.max(np.abs(back.blocks - asm.blocks)) <= 1e-12
    assert np.max(np.abs(back.bob_marginals()[0] - sb)) <= 1e-12


def test_reconstruct_rejects_asymmetric_data():
    q = np.eye(2) / 4
    grid = np.array([[np.eye(2) / 8, np.eye(2) / 8], [np.eye(2) / 9, np.eye(2) / 8]])
    with pytest.raises(ValueError, match="symmetric"):
        reconstruct_from_minimal(np.eye(2) / 2, [q, q], grid)


def test_example_is_bob_charlie_symmetric():
    asm = example_assemblage()
    assert np.max(np.abs(asm.swap_parties().blocks - asm.blocks)) <= 1e-15


# ---------------------------------------------------------------- PR box

def test_prbox_product_blocks():
    asm = prbox_product(np.eye(2) / 2)
    assert np.allclose(asm.blocks[0, 0, 0, 0], np.eye(2) / 4)
    assert np.allclose(asm.blocks[0, 1, 0, 0], 0)
    assert validate_tripartite_ns(asm, 1e-12).passed
    for b, c, y, z in SC.keys():
        expected = 0.5 if (b ^ c) == (y & z) else 0.0
        assert asm.traces[b, c, y, z] == pytest.approx(expected, abs=1e-15)
    p = asm.traces
    assert np.allclose(p.sum(axis=1), 0.5) and np.allclose(p.sum(axis=0), 0.5)


def test_prbox_rejects_non_states():
    with pytest.raises(ValueError):
        prbox_product(np.eye(2))
    with pytest.raises(ValueError):
        prbox_product(np.diag([1.5, -0.5]))


# ---------------------------------------------------------------- noise, lift, filter

def test_noise_endpoints():
    asm = example_assemblage()
    assert np.allclose(add_noise(asm, 1.0).blocks, asm.blocks, atol=0)
    full = add_noise(asm, 0.0)
    tr = asm.traces
    assert np.allclose(full.blocks, tr[..., None, None] * np.eye(2) / 2, atol=1e-15)
    assert np.allclose(denoise(asm, 1.0).blocks, asm.blocks, atol=0)


def test_noise_round_trip_on_example():
    asm = example_assemblage()
    back = add_noise(denoise(asm, MU_OCTAGON), MU_OCTAGON)
    assert np.max(np.abs(back.blocks - asm.blocks)) <= 1e-12


def test_noise_rejects_bad_arguments():
    asm = example_assemblage()
    with pytest.raises(ValueError):
        add_noise(asm, 1.5)
    with pytest.raises(ValueError):
        denoise(asm, 0.0)
    with pytest.raises(ScenarioMismatch):
        add_noise(lift_qutrit(asm), 0.5)


def test_denoise_warns_on_large_negativity():
    asm = prbox_product(np.diag([1.0, 0.0]))
    with pytest.warns(UserWarning, match="eigenvalue"):
        denoise(asm, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        denoise(example_assemblage(), MU_OCTAGON)


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0.05, 1.0))
def test_construction_round_trips(seed, mu):
    asm = random_quantum_assemblage(np.random.default_rng(seed))
    noisy = add_noise(asm, mu)
    assert np.max(np.abs(denoise(noisy, mu).blocks - asm.blocks)) <= 1e-12
    assert np.max(np.abs(noisy.traces - asm.traces)) <= 1e-15
    lifted = lift_qutrit(asm)
    assert np.max(np.abs(lifted.traces - asm.traces)) <= 1e-15
    assert validate_tripartite_ns(lifted).passed
    assert np.max(np.abs(filter_back(lifted).blocks - asm.blocks)) <= 1e-12


def test_lift_zero_block_and_filter_errors():
    blocks = np.zeros(SC.block_shape)
    lifted = lift_qutrit(Assemblage(SC, blocks))
    assert np.all(lifted.blocks == 0)
    only_two = np.zeros(Scenario(3).block_shape)
    only_two[..., 2, 2] = 0.25
    with pytest.raises(ValueError, match="no weight"):
        filter_back(Assemblage(Scenario(3), only_two))
    with pytest.raises(ScenarioMismatch):
        filter_back(example_assemblage())


def test_filtered_traces_match_pre_lift_traces():
    asm = example_assemblage()
    filtered = filter_back(lift_qutrit(asm))
    # weight left in the qubit subspace of the lifted reduced state is tr(rho)/3 = 1/3
    kept = lift_qutrit(asm).blocks[..., :2, :2]
    assert np.allclose(np.trace(kept, axis1=-2, axis2=-1).real * 3, asm.traces, atol=1e-12)
    assert np.max(np.abs(filtered.traces - asm.traces)) <= 1e-12


# ---------------------------------------------------------------- behaviours

def test_trivial_measurement_halves_probabilities():
    asm = example_assemblage()
    E = np.array([[np.eye(2) / 2, np.eye(2) / 2]])
    p = behaviour(asm, E)
    expected = asm.traces.transpose(2, 3, 0, 1) / 2  # [y, z, b, c]
    assert np.allclose(p.table[0, :, :, 0], expected, atol=1e-12)


def test_octagon_on_prbox_factorises():
    rho = np.diag([0.8, 0.2])
    p = behaviour(prbox_product(rho), octagon_set())
    for y, z, a, b, c in np.ndindex(2, 2, 2, 2, 2):
        expected = prbox_distribution(y, z, b, c) * np.trace(projector(0.0, a) @ rho)
        assert p.table[0, y, z, a, b, c] == pytest.approx(expected, abs=1e-12)


def test_behaviour_rejects_incomplete_povm():
    with pytest.raises(ValueError):
        behaviour(example_assemblage(), np.array([[np.eye(2) / 2, np.eye(2) / 3]]))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_behaviour_of_valid_assemblage_is_no_signalling(seed):
    rng = np.random.default_rng(seed)
    asm = random_quantum_assemblage(rng, real=True)
    p = behaviour(asm, octagon_set())
    assert p.check(1e-10, 1e-10) == []
    assert np.min(p.table) >= -1e-10
    assert math.isclose(float(p.table[0, 0, 0].sum()), 1.0, abs_tol=1e-10)

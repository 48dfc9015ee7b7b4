import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twosite.config import ConfigError, SimConfig
from twosite.mc import EventKind, apply_event, next_event
from twosite.state import (
    InvariantError,
    audit,
    coalesce,
    empirical_snapshot,
    find_root,
    init_system,
    spectrum,
)


def test_init_two_monomers():
    sys = init_system(SimConfig(n0=2))
    assert sys.count.tolist() == [2, 0]
    assert sys.total_mass.tolist() == [2, 0]
    assert sys.sum_sq.tolist() == [2, 0]
    assert sys.max_mass[0] == 1
    assert sys.t == 0.0


def test_init_symmetric():
    sys = init_system(SimConfig(n0=1, n1=1))
    assert sys.count.tolist() == [1, 1]
    assert sys.total_mass.tolist() == [1, 1]


def test_init_large_count_identities():
    sys = init_system(SimConfig(n0=10**6, n1=5 * 10**5))
    assert int(sys.total_mass.sum()) == 1_500_000
    assert sys.sum_sq[0] == 10**6
    assert np.all(sys.site[:10**6] == 0) and np.all(sys.site[10**6:] == 1)


def test_init_rejects_single_monomer():
    with pytest.raises(ConfigError, match="need at least two monomers"):
        SimConfig(n0=1, n1=0)


def test_spectrum_monomeric_and_after_merge():
    sys = init_system(SimConfig(n0=2))
    assert spectrum(sys)[0] == {1: 2}
    ev = next_event(sys, 0.0)
    while ev.kind is not EventKind.COALESCENCE:
        apply_event(sys, ev)
        ev = next_event(sys, 0.0)
    apply_event(sys, ev, check=True)
    sp = spectrum(sys)
    assert sp[0] == {2: 1} and sp[1] == {}
    assert sp.total_mass() == 2


def test_snapshot_examples():
    sys = init_system(SimConfig(n0=4))
    rec = empirical_snapshot(sys, 1)
    assert rec.sigma_hat[0] == 1.0
    # merge everything into one particle of mass N at site 0
    n = 6
    sys = init_system(SimConfig(n0=n))
    for b in range(1, n):
        coalesce(sys.parent, sys.mass, sys.site, sys.roots, sys.pos, sys.hist, sys.total_mass,
                 sys.count, sys.sum_sq, sys.max_mass, find_root(sys.parent, 0), find_root(sys.parent, b))
    audit(sys)
    rec = empirical_snapshot(sys, 3)
    assert rec.sigma_hat[0] == n
    assert rec.rho_hat[0] == n**2
    assert rec.gelled == (True, False)
    with pytest.raises(ValueError):
        empirical_snapshot(sys, 0)


def test_threshold_paper_scale():
    # 2 N^(2/3) at N = 1e9
    assert SimConfig(n0=10**9).gel_threshold == 2_000_000


def test_threshold_desk_scale():
    assert SimConfig(n0=10**7).gel_threshold == 92832


def test_gelled_flags_sticky():
    sys = init_system(SimConfig(n0=4))
    rec = empirical_snapshot(sys, 100, gelled_before=(True, False))
    assert rec.gelled == (True, False)


def test_audit_detects_corruption():
    sys = init_system(SimConfig(n0=5, n1=3))
    audit(sys)
    sys.sum_sq[0] += 1
    with pytest.raises(InvariantError):
        audit(sys)


@settings(max_examples=40, deadline=None)
@given(n0=st.integers(0, 40), n1=st.integers(0, 40), kappa=st.floats(0.0, 3.0),
       seed=st.integers(0, 2**32), steps=st.integers(1, 200))
def test_random_event_sequences_keep_invariants(n0, n1, kappa, seed, steps):
    if n0 + n1 < 2:
        return
    sys = init_system(SimConfig(n0=n0, n1=n1, kappa=kappa, seed=seed))
    roots = sys.n_particles
    for _ in range(steps):
        if sys.n_particles == 1 and kappa == 0.0:
            break
        ev = next_event(sys, kappa)
        apply_event(sys, ev, check=True)
        if ev.kind is EventKind.COALESCENCE:
            assert sys.n_particles == roots - 1
        else:
            assert sys.n_particles == roots
        roots = sys.n_particles
        sp = spectrum(sys)
        assert sp.total_mass() == sys.n
        for j in (0, 1):
            assert all(k >= 1 for k in sp[j].values())
            assert sum(k for k in sp[j].values()) == sys.count[j]
            assert sum(m * m * k for m, k in sp[j].items()) == sys.sum_sq[j]
        rec = empirical_snapshot(sys, 1)
        for j in (0, 1):
            assert rec.sigma_hat[j] >= rec.mass_frac[j]

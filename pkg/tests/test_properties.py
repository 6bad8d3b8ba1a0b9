import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ccpstress.balance_sheet import (
    EquityObservation,
    equity_vol_from_assets,
    invert_merton,
    price_doc_call,
)
from ccpstress.contagion import ContagionParams, propagate
from ccpstress.netrecon import link_probability
from ccpstress.shocks import ShockConfig, ShockVector, distributed_shock

from _builders import network, random_instance, snapshot

pos = st.floats(1e-3, 1e3)


@given(z=st.floats(0, 1e6), a=st.floats(0, 1e6), l=st.floats(0, 1e6))
def test_link_probability_is_probability(z, a, l):
    p = link_probability(z, a, l)
    assert 0 <= p <= 1


@settings(max_examples=60, deadline=None)
@given(ratio=st.floats(1.05, 100), s=st.floats(0.05, 0.8), L=pos,
       r=st.floats(0, 0.1), T=st.floats(0.25, 5))
def test_inversion_round_trip(ratio, s, L, r, T):
    A = ratio * L
    base = EquityObservation("m", None, 1.0, 1.0, L, 0.0, r, T)
    obs = EquityObservation("m", None, price_doc_call(A, s, base),
                            equity_vol_from_assets(A, s, base), L, 0.0, r, T)
    sol = invert_merton(obs)
    assert math.isclose(sol.assets, A, rel_tol=1e-6)
    assert math.isclose(sol.asset_vol, s, rel_tol=1e-6)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lgd=st.floats(0, 1), rho=st.floats(0, 1),
       tau=st.sampled_from([0.0, 0.5, 3.0, math.inf]))
def test_trajectory_invariants(seed, lgd, rho, tau):
    rng = np.random.default_rng(seed)
    w, eq, h1 = random_instance(rng, 6)
    snap = snapshot(eq, a_int=w.sum(axis=1), l_int=w.sum(axis=0))
    tr = propagate(network(w, 3 * w.sum() + 1), snap, ShockVector(h1 * eq, h1),
                   ContagionParams(lgd=lgd, rho=rho, tau=tau))
    assert np.all(np.diff(tr.h, axis=0) >= 0)
    assert np.all((tr.h >= 0) & (tr.h <= 1))
    assert np.all(tr.h[0] == 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), x=st.floats(0, 0.05), phi=st.floats(0, 1))
def test_shock_bounds(seed, x, phi):
    rng = np.random.default_rng(seed)
    eq = rng.uniform(0.5, 10, 6)
    m = rng.uniform(0, 2, 6)
    s = snapshot(eq, margin=m, margin_str=m * rng.uniform(0.5, 2, 6))
    sv = distributed_shock(s, ShockConfig(x=x, phi=phi), rng)
    assert np.all((sv.losses >= 0) & (sv.losses <= eq))
    assert np.all((sv.initial_distress >= 0) & (sv.initial_distress <= 1))

"""Shared builders for market test instances."""

import numpy as np

from esbid.market import Bid, Generator, Line, MarketInstance, Network, StoragePhysical


def one_bus_trivial():
    return MarketInstance(
        Network(1),
        (Generator(0, c=0.01, o=10.0, P=200.0),),
        np.array([[100.0]]),
        StoragePhysical(0, E_max=0.0, P_max=0.0),
    )


def arbitrage_t2(e_max=50.0, p_max=50.0):
    return MarketInstance(
        Network(1),
        (Generator(0, c=0.01, o=0.0, P=1000.0, K=1000.0),),
        np.array([[50.0, 150.0]]),
        StoragePhysical(0, E_max=e_max, P_max=p_max, eta_c=1.0, eta_d=1.0, y_init=0.0),
    )


def random_instance(rng: np.random.Generator, max_buses=3, max_periods=4):
    """Random small instance with storage, plus a random bid inside its box."""
    I = int(rng.integers(1, max_buses + 1))
    T = int(rng.integers(1, max_periods + 1))
    lines = []
    for k in range(1, I):
        lines.append(
            Line(int(rng.integers(0, k)), k, float(rng.uniform(5, 20)),
                 float(rng.uniform(40, 150)) if rng.random() < 0.6 else np.inf)
        )
    if I == 3 and rng.random() < 0.5:
        a, b = (0, 2) if lines[1].from_bus == 1 else (1, 2)
        lines.append(Line(a, b, float(rng.uniform(5, 20)), float(rng.uniform(40, 150))))
    gens = []
    for i in range(I):
        P = 0.0 if (i > 0 and rng.random() < 0.25) else float(rng.uniform(80, 250))
        K = float(rng.uniform(30, 120)) if rng.random() < 0.5 else np.inf
        gens.append(Generator(i, float(rng.uniform(0.005, 0.05)), float(rng.uniform(5, 30)), P, K))
    cap = sum(g.P for g in gens)
    loads = rng.uniform(0, 70, size=(I, T)) * (rng.random((I, T)) < 0.85)
    loads *= min(1.0, 0.9 * cap / max(loads.sum(axis=0).max(), 1e-9))
    E = float(rng.uniform(10, 60))
    st = StoragePhysical(
        int(rng.integers(0, I)),
        E_max=E,
        P_max=float(rng.uniform(5, 40)),
        eta_c=float(rng.uniform(0.7, 1.0)),
        eta_d=float(rng.uniform(0.7, 1.0)),
        y_init=float(rng.uniform(0, E / 2)) if rng.random() < 0.5 else 0.0,
    )
    inst = MarketInstance(Network(I, tuple(lines), int(rng.integers(0, I))), tuple(gens), loads, st)
    bid = Bid(float(rng.uniform(0, st.E_max)), float(rng.uniform(0, st.P_max)))
    return inst, bid

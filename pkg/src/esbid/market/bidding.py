"""Storage owner's bidding problem as a black-box objective."""

from __future__ import annotations

import numpy as np

from ..optimizer import Objective
from ..sampling import Bounds
from .clearing import clear_market, storage_profit
from .model import Bid, MarketInstance


def bidding_objective(instance: MarketInstance) -> Objective:
    """Negated storage profit as a function of ``x = (e_m, p_m)``.

    The box is ``[0, E_max] x [0, P_max]``. Each evaluation clears the
    market from scratch, so concurrent calls are safe. Clearing
    infeasibility propagates as an exception.
    """
    st = instance.storage

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        result = clear_market(instance, Bid(float(x[0]), float(x[1])))
        return -storage_profit(result, instance)

    return Objective(evaluate, Bounds([0.0, 0.0], [st.E_max, st.P_max]), reentrant=True)

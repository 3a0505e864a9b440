"""Lower-level market clearing and the storage bidding objective."""

from .clearing import (
    ClearingResult,
    Mode,
    check_result,
    clear_market,
    enumerate_patterns,
    lmps_from,
    solve_qp_fixed_binaries,
    storage_profit,
)
from .model import (
    Bid,
    Generator,
    Line,
    MarketInstance,
    Network,
    StoragePhysical,
    bundled_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    validate_instance,
)
from .bidding import bidding_objective

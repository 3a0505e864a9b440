"""Market data: network, generators, storage, loads, and bids.

Units: MW for power, MWh for energy, $ for cost, 1-hour periods, so
MW and MWh-per-period coincide numerically. Buses are 0-indexed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    b: float  # susceptance, flow = b * (theta_from - theta_to)
    F: float = np.inf  # MW


@dataclass(frozen=True)
class Network:
    bus_count: int
    lines: tuple[Line, ...] = ()
    reference_bus: int = 0


@dataclass(frozen=True)
class Generator:
    bus: int
    c: float  # $/MW^2h
    o: float  # $/MWh
    P: float  # MW
    K: float = np.inf  # MW per period


@dataclass(frozen=True)
class StoragePhysical:
    bus: int
    E_max: float
    P_max: float
    eta_c: float = 1.0
    eta_d: float = 1.0
    y_init: float = 0.0


@dataclass(frozen=True)
class Bid:
    e_m: float
    p_m: float


@dataclass(frozen=True)
class MarketInstance:
    network: Network
    generators: tuple[Generator, ...]
    loads: np.ndarray  # (I, T)
    storage: StoragePhysical
    name: str = field(default="", compare=False)

    @property
    def horizon(self) -> int:
        return int(np.shape(self.loads)[1])

    @property
    def bus_count(self) -> int:
        return self.network.bus_count

    def generator_at(self, bus: int) -> Generator:
        for g in self.generators:
            if g.bus == bus:
                return g
        return Generator(bus=bus, c=0.0, o=0.0, P=0.0)

    def with_loads(self, loads) -> "MarketInstance":
        return MarketInstance(
            self.network, self.generators, np.array(loads, dtype=float), self.storage, self.name
        )


def _connected(n: int, lines) -> bool:
    if n <= 1:
        return True
    adj = {i: set() for i in range(n)}
    for ln in lines:
        if 0 <= ln.from_bus < n and 0 <= ln.to_bus < n:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
    seen, stack = {0}, [0]
    while stack:
        for k in adj[stack.pop()]:
            if k not in seen:
                seen.add(k)
                stack.append(k)
    return len(seen) == n


def validate_instance(instance: MarketInstance, horizon: int | None = None) -> list[str]:
    """Return human-readable invariant violations; empty means valid.

    ``horizon`` is the declared horizon from the instance file, when one
    was given, and is checked against the load matrix.
    """
    out = []
    net = instance.network
    n = net.bus_count
    if n < 1:
        out.append(f"network.bus_count must be >= 1, got {n}")
        return out
    if not 0 <= net.reference_bus < n:
        out.append(f"network.reference_bus {net.reference_bus} outside 0..{n - 1}")
    for j, ln in enumerate(net.lines):
        where = f"network.lines[{j}]"
        if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n):
            out.append(f"{where}: bus index outside 0..{n - 1}")
        if ln.from_bus == ln.to_bus:
            out.append(f"{where}: self-loop at bus {ln.from_bus}")
        if not ln.b > 0:
            out.append(f"{where}.b must be > 0, got {ln.b}")
        if not ln.F > 0:
            out.append(f"{where}.F must be > 0, got {ln.F}")
    if not _connected(n, net.lines):
        out.append("network is not connected")

    seen = set()
    for j, g in enumerate(instance.generators):
        where = f"generators[{j}]"
        if not 0 <= g.bus < n:
            out.append(f"{where}.bus {g.bus} outside 0..{n - 1}")
        if g.bus in seen:
            out.append(f"{where}: more than one generator at bus {g.bus}")
        seen.add(g.bus)
        if not g.c >= 0:
            out.append(f"{where}.c must be >= 0, got {g.c}")
        if not np.isfinite(g.o):
            out.append(f"{where}.o must be finite")
        if not g.P >= 0:
            out.append(f"{where}.P must be >= 0, got {g.P}")
        if not g.K > 0:
            out.append(f"{where}.K must be > 0, got {g.K}")

    loads = np.asarray(instance.loads, dtype=float)
    if loads.ndim != 2 or loads.shape[0] != n:
        out.append(f"loads must be a {n} x T array, got shape {loads.shape}")
    else:
        T = loads.shape[1]
        if T < 1:
            out.append("horizon must be >= 1")
        if horizon is not None and horizon != T:
            out.append(f"loads have {T} periods but horizon is {horizon}")
        if not np.all(np.isfinite(loads)):
            out.append("loads must be finite")

    st = instance.storage
    if not 0 <= st.bus < n:
        out.append(f"storage.bus {st.bus} outside 0..{n - 1}")
    if not st.E_max >= 0:
        out.append(f"storage.E_max must be >= 0, got {st.E_max}")
    if not st.P_max >= 0:
        out.append(f"storage.P_max must be >= 0, got {st.P_max}")
    for name in ("eta_c", "eta_d"):
        v = getattr(st, name)
        if not 0 < v <= 1:
            out.append(f"storage.{name} must lie in (0, 1], got {v}")
    if not 0 <= st.y_init <= st.E_max:
        out.append(f"storage.y_init must lie in [0, E_max], got {st.y_init}")

    if not out:
        out.extend(screen_capacity(instance))
    return out


def screen_capacity(instance: MarketInstance) -> list[str]:
    """Periods whose total load exceeds generation plus storage power."""
    cap = sum(g.P for g in instance.generators) + instance.storage.P_max
    total = np.sum(instance.loads, axis=0)
    return [
        f"period {t}: total load {total[t]:g} MW exceeds capacity {cap:g} MW"
        for t in range(len(total))
        if total[t] > cap + 1e-9
    ]


def _num(d, key, where, default=None):
    if key not in d:
        if default is not None:
            return default
        raise ConfigurationError(f"{where}: missing field '{key}'")
    v = d[key]
    if v is None and default is not None:
        return default
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _int(d, key, where):
    if key not in d:
        raise ConfigurationError(f"{where}: missing field '{key}'")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigurationError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def instance_from_dict(doc: dict, name: str = "") -> tuple[MarketInstance, int]:
    """Build an instance from the JSON document layout.

    Returns the instance together with the declared horizon. Missing line
    capacities and ramp limits mean "unlimited".
    """
    if not isinstance(doc, dict):
        raise ConfigurationError("instance document must be a JSON object")
    horizon = _int(doc, "horizon", "instance")
    net = doc.get("network")
    if not isinstance(net, dict):
        raise ConfigurationError("instance: missing object 'network'")
    loads = doc.get("loads")
    if not isinstance(loads, list) or not all(isinstance(r, list) for r in loads):
        raise ConfigurationError("instance.loads: expected an array of arrays")
    try:
        loads_arr = np.array(loads, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"instance.loads: {exc}") from None
    if loads_arr.ndim != 2:
        raise ConfigurationError("instance.loads: rows must all have the same length")
    lines = []
    for j, ln in enumerate(net.get("lines", [])):
        where = f"network.lines[{j}]"
        lines.append(
            Line(
                _int(ln, "from", where),
                _int(ln, "to", where),
                _num(ln, "b", where),
                _num(ln, "F", where, default=np.inf),
            )
        )
    bus_count = int(net.get("bus_count", loads_arr.shape[0]))
    network = Network(bus_count, tuple(lines), _int(net, "reference_bus", "network"))
    gens = []
    for j, g in enumerate(doc.get("generators", [])):
        where = f"generators[{j}]"
        gens.append(
            Generator(
                _int(g, "bus", where),
                _num(g, "c", where),
                _num(g, "o", where),
                _num(g, "P", where),
                _num(g, "K", where, default=np.inf),
            )
        )
    st = doc.get("storage")
    if not isinstance(st, dict):
        raise ConfigurationError("instance: missing object 'storage'")
    storage = StoragePhysical(
        _int(st, "bus", "storage"),
        _num(st, "E_max", "storage"),
        _num(st, "P_max", "storage"),
        _num(st, "eta_c", "storage", default=1.0),
        _num(st, "eta_d", "storage", default=1.0),
        _num(st, "y_init", "storage", default=0.0),
    )
    return MarketInstance(network, tuple(gens), loads_arr, storage, name), horizon


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def instance_to_dict(instance: MarketInstance) -> dict:
    doc = {
        "horizon": instance.horizon,
        "network": {
            "reference_bus": instance.network.reference_bus,
            "lines": [],
        },
        "generators": [],
        "loads": np.asarray(instance.loads).tolist(),
        "storage": {
            "bus": instance.storage.bus,
            "E_max": instance.storage.E_max,
            "P_max": instance.storage.P_max,
            "eta_c": instance.storage.eta_c,
            "eta_d": instance.storage.eta_d,
            "y_init": instance.storage.y_init,
        },
    }
    for ln in instance.network.lines:
        d = {"from": ln.from_bus, "to": ln.to_bus, "b": ln.b}
        if np.isfinite(ln.F):
            d["F"] = ln.F
        doc["network"]["lines"].append(d)
    for g in instance.generators:
        d = {"bus": g.bus, "c": g.c, "o": g.o, "P": g.P}
        if np.isfinite(g.K):
            d["K"] = g.K
        doc["generators"].append(d)
    return doc


def load_instance(path, *, validate: bool = True) -> MarketInstance:
    """Read an instance JSON file.

    Raises:
        ConfigurationError: on malformed JSON, missing fields, or (with
            ``validate``) any invariant violation; the message lists them.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    instance, horizon = instance_from_dict(doc, name=path.stem)
    if validate:
        problems = validate_instance(instance, horizon)
        if problems:
            raise ConfigurationError(f"{path}: " + "; ".join(problems))
    return instance


def bundled_instance(name: str) -> MarketInstance:
    """Load one of the instances shipped in ``esbid/data``."""
    from importlib import resources

    ref = resources.files("esbid") / "data" / f"{name}.json"
    with resources.as_file(ref) as p:
        return load_instance(p)

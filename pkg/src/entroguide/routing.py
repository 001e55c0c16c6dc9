"""Capacitated vehicle-routing instances, parsing, and evaluation.

Solutions are lists of routes, each an ordered list of 1-based customer
indices; every route implicitly starts and ends at the depot.  Optimal
distances for small instances come from an exact dynamic program so
solution quality can be scored as a ratio to the optimum.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass

MAX_EXACT_CUSTOMERS = 8


@dataclass(frozen=True)
class Customer:
    x: float
    y: float
    demand: float


@dataclass(frozen=True)
class RoutingInstance:
    depot: tuple[float, float]
    customers: tuple[Customer, ...]
    vehicle_capacity: float
    optimal_distance: float | None = None

    def __post_init__(self) -> None:
        if self.vehicle_capacity <= 0:
            raise ValueError("vehicle capacity must be positive")
        for i, c in enumerate(self.customers):
            if not (math.isfinite(c.x) and math.isfinite(c.y)):
                raise ValueError(f"customer {i + 1} has non-finite coordinates")
            if c.demand <= 0:
                raise ValueError(f"customer {i + 1} demand must be positive")
            if c.demand > self.vehicle_capacity:
                raise ValueError(f"customer {i + 1} demand exceeds capacity")

    def to_dict(self) -> dict:
        out = {
            "depot": {"x": self.depot[0], "y": self.depot[1]},
            "customers": [{"x": c.x, "y": c.y, "demand": c.demand}
                          for c in self.customers],
            "capacity": self.vehicle_capacity,
        }
        if self.optimal_distance is not None:
            out["optimal_distance"] = self.optimal_distance
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RoutingInstance":
        depot = (float(data["depot"]["x"]), float(data["depot"]["y"]))
        customers = tuple(Customer(float(c["x"]), float(c["y"]),
                                   float(c["demand"]))
                          for c in data["customers"])
        return cls(depot=depot, customers=customers,
                   vehicle_capacity=float(data["capacity"]),
                   optimal_distance=(float(data["optimal_distance"])
                                     if data.get("optimal_distance") is not None
                                     else None))


def _distance_matrix(instance: RoutingInstance) -> list[list[float]]:
    # Index 0 is the depot; customers are 1..n.
    points = [instance.depot] + [(c.x, c.y) for c in instance.customers]
    return [[math.dist(a, b) for b in points] for a in points]


def route_distance(route: list[int], matrix: list[list[float]]) -> float:
    total = 0.0
    prev = 0
    for idx in route:
        total += matrix[prev][idx]
        prev = idx
    return total + matrix[prev][0]


def solve_optimal(instance: RoutingInstance) -> float:
    """Exact optimum via per-subset path DP plus a subset-partition DP.

    Exponential in customer count; callers must keep instances at or
    below MAX_EXACT_CUSTOMERS.
    """
    n = len(instance.customers)
    if n == 0:
        return 0.0
    if n > MAX_EXACT_CUSTOMERS:
        raise ValueError(
            f"exact solver limited to {MAX_EXACT_CUSTOMERS} customers, got {n}")
    matrix = _distance_matrix(instance)
    demands = [c.demand for c in instance.customers]
    full = 1 << n

    # best[S][j]: cheapest depot-start path visiting subset S, ending at
    # customer j (0-based bit j).
    inf = math.inf
    best = [[inf] * n for _ in range(full)]
    for j in range(n):
        best[1 << j][j] = matrix[0][j + 1]
    for subset in range(full):
        for j in range(n):
            cur = best[subset][j]
            if cur == inf or not subset & (1 << j):
                continue
            for k in range(n):
                if subset & (1 << k):
                    continue
                nxt = subset | (1 << k)
                cand = cur + matrix[j + 1][k + 1]
                if cand < best[nxt][k]:
                    best[nxt][k] = cand

    subset_demand = [0.0] * full
    route_cost = [inf] * full
    for subset in range(1, full):
        low = subset & -subset
        subset_demand[subset] = subset_demand[subset ^ low] + demands[low.bit_length() - 1]
        if subset_demand[subset] <= instance.vehicle_capacity:
            route_cost[subset] = min(best[subset][j] + matrix[j + 1][0]
                                     for j in range(n) if subset & (1 << j))

    # partition[S]: cheapest covering of subset S by capacity-feasible routes.
    partition = [inf] * full
    partition[0] = 0.0
    for subset in range(1, full):
        low = subset & -subset
        sub = subset
        while sub:
            if sub & low and route_cost[sub] < inf and partition[subset ^ sub] < inf:
                cand = route_cost[sub] + partition[subset ^ sub]
                if cand < partition[subset]:
                    partition[subset] = cand
            sub = (sub - 1) & subset
    if partition[full - 1] == inf:
        raise ValueError("instance admits no capacity-feasible solution")
    return partition[full - 1]


_ROUTE_LINE_RE = re.compile(r"route\s*\d*\s*:(.*)", re.IGNORECASE)
_STOP_RE = re.compile(r"\bc(\d+)\b|\bdepot\b|\b(\d+)\b", re.IGNORECASE)
_BARE_SEQ_RE = re.compile(r"^\s*\d+(?:\s*(?:->|→|,|\s)\s*\d+)+\s*$")


def parse_route(response: str, instance: RoutingInstance) -> list[list[int]]:
    """Recover routes from a textual answer; unparseable text yields []."""
    routes: list[list[int]] = []
    for line in response.splitlines():
        match = _ROUTE_LINE_RE.search(line)
        if match:
            body = match.group(1)
        elif _BARE_SEQ_RE.match(line):
            body = line
        else:
            continue
        stops: list[int] = []
        for m in _STOP_RE.finditer(body):
            if m.group(1) is not None:
                stops.append(int(m.group(1)))
            elif m.group(2) is not None:
                stops.append(int(m.group(2)))
            # bare "depot" matches are separators, not stops
        if stops:
            routes.append(stops)
    return routes


@dataclass(frozen=True)
class RouteEvaluation:
    feasible: bool
    distance: float
    accuracy_pct: float
    diagnostic: str = ""


def evaluate_route(routes: list[list[int]],
                   instance: RoutingInstance) -> RouteEvaluation:
    """Check feasibility, total distance, and accuracy vs the optimum.

    Feasible means every customer is visited exactly once and each
    route's demand fits the vehicle.  Accuracy is 100 * min(1, d*/d);
    infeasible solutions score 0.
    """
    n = len(instance.customers)
    seen: dict[int, int] = {}
    for route in routes:
        for idx in route:
            if idx < 1 or idx > n:
                return RouteEvaluation(False, 0.0, 0.0,
                                       f"customer index {idx} out of range 1..{n}")
            seen[idx] = seen.get(idx, 0) + 1
    missing = [i for i in range(1, n + 1) if i not in seen]
    if missing:
        return RouteEvaluation(False, 0.0, 0.0,
                               f"customers never visited: {missing}")
    repeated = sorted(i for i, count in seen.items() if count != 1)
    if repeated:
        return RouteEvaluation(False, 0.0, 0.0,
                               f"customers visited more than once: {repeated}")
    for k, route in enumerate(routes, start=1):
        demand = sum(instance.customers[idx - 1].demand for idx in route)
        if demand > instance.vehicle_capacity:
            return RouteEvaluation(
                False, 0.0, 0.0,
                f"route {k} demand {demand:.3f} exceeds capacity "
                f"{instance.vehicle_capacity:.3f}")

    matrix = _distance_matrix(instance)
    distance = sum(route_distance(route, matrix) for route in routes)
    optimal = instance.optimal_distance
    if optimal is None:
        optimal = solve_optimal(instance)
    if distance <= 0.0:
        accuracy = 100.0
    else:
        accuracy = 100.0 * min(1.0, optimal / distance)
    return RouteEvaluation(True, distance, accuracy)


def generate_instance(customers: int, seed: int, capacity: float = 30.0,
                      solve: bool = True) -> RoutingInstance:
    """Random instance: coordinates uniform in [0,100]^2, demands in [1, cap/2]."""
    if customers < 1:
        raise ValueError("need at least one customer")
    rng = random.Random(seed)
    depot = (rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0))
    custs = tuple(Customer(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0),
                           rng.uniform(1.0, capacity / 2.0))
                  for _ in range(customers))
    instance = RoutingInstance(depot=depot, customers=custs,
                               vehicle_capacity=capacity)
    if solve and customers <= MAX_EXACT_CUSTOMERS:
        instance = RoutingInstance(depot=depot, customers=custs,
                                   vehicle_capacity=capacity,
                                   optimal_distance=solve_optimal(instance))
    return instance


def format_routes(routes: list[list[int]]) -> str:
    lines = []
    for i, route in enumerate(routes, start=1):
        stops = " -> ".join(f"c{idx}" for idx in route)
        lines.append(f"Route {i}: depot -> {stops} -> depot")
    return "\n".join(lines)

import numpy as np
import pytest

from evcover.covering import build_coverage
from evcover.datasets import generate_small_dataset, generate_small_instance
from evcover.instance import CostBudget, ChoiceSets, Instance, Station, UserClass, UtilityParams
from evcover.network import Edge, Network, Node


def line_network(lengths=(3.0,), populations=None):
    """Nodes on a line: n0 - n1 - ... with the given edge lengths."""
    xs = np.concatenate([[0.0], np.cumsum(lengths)])
    populations = populations or [100.0] * len(xs)
    nodes = [Node(f"n{i}", float(x), 0.0, populations[i]) for i, x in enumerate(xs)]
    edges = [Edge(f"n{i}", f"n{i+1}", float(L)) for i, L in enumerate(lengths)]
    return Network(nodes, edges)


def manual_instance(*, n_stations=1, max_outlets=2, horizon=1, scenarios=1,
                    kappa_station=2.0, kappa_optout=4.5, beta=0.281,
                    eps=None, budget=400.0, populations=(100.0,),
                    initial_outlets=0, cost_first=150.0, cost_later=50.0,
                    home_kappa=None):
    """Tiny hand-specified instance: one user class at n0, stations on n1..

    eps: optional (n_alts, R, T) array; zero when omitted. Alternative order
    is opt-out, then home (if home_kappa given), then stations 1..n.
    """
    net = line_network([1.0] * max(n_stations, 1))
    stations = [Station(id=j + 1, node_id=f"n{j+1}", max_outlets=max_outlets,
                        initial_outlets=initial_outlets) for j in range(n_stations)]
    sids = [s.id for s in stations]
    exo = [0, -1] if home_kappa is not None else [0]
    uc = UserClass(id="c0", home_node="n0", populations=tuple(populations) * horizon
                   if len(populations) == 1 else tuple(populations),
                   has_home_charging=home_kappa is not None,
                   scenario_count=scenarios, consideration_radius=None)
    choice = ChoiceSets([[list(exo)] * horizon], [[list(sids)] * horizon])
    n_alts = len(exo) + n_stations
    kap = np.zeros((n_alts, horizon))
    kap[0, :] = kappa_optout
    row = 1
    if home_kappa is not None:
        kap[1, :] = home_kappa
        row = 2
    kap[row:, :] = kappa_station
    bet = np.zeros((n_alts, max_outlets, horizon))
    bet[row:, :, :] = beta
    if eps is None:
        eps = np.zeros((n_alts, scenarios, horizon))
    cost = CostBudget.uniform(n_stations, max_outlets, horizon, cost_first, cost_later, budget)
    return Instance(network=net, stations=stations, user_classes=[uc], horizon=horizon,
                    cost_budget=cost, utility_params=UtilityParams([kap], [bet]),
                    choice_sets=choice, error_tensor=[eps],
                    metadata={"dataset_kind": "manual", "seed": 0})


@pytest.fixture(scope="session")
def small_instance():
    return generate_small_instance(7)


@pytest.fixture(scope="session")
def small_coverage(small_instance):
    return build_coverage(small_instance)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_small_dataset(21, 4, horizon=3, max_scenarios=8)

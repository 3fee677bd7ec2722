import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog, minimize

from hessbar.errors import ConfigurationError, GenerationFailed, Unreachable
from hessbar.solver import SolverConfig, Termination, hba_solve
from hessbar.tap import (
    DiGraph,
    TapInstance,
    enumerate_min_hop_paths,
    generate_barabasi_albert,
    generate_tap_instance,
    path_cost_sum_optimum,
    path_vertices,
    tap_gradient,
    tap_lipschitz,
    tap_objective,
    tap_problem,
)

from conftest import central_diff

MODES = ("PathCostSum", "TotalEdgeLatency")


def oracle_paths(graph, o, d, k):
    """First ``k`` simple paths in (hops, edge ids) order by exhaustive enumeration."""
    g = nx.MultiDiGraph()
    g.add_nodes_from(range(graph.num_vertices))
    for e, (u, v) in enumerate(graph.edge_list()):
        g.add_edge(u, v, key=e)
    paths = [tuple(key for _, _, key in p) for p in nx.all_simple_edge_paths(g, o, d)]
    return sorted(paths, key=lambda p: (len(p), p))[:k]


def single_edge_instance(x_demand=2.0):
    graph = DiGraph(2, [0], [1])
    return TapInstance(graph, np.array([0]), np.array([1]), np.array([x_demand]), (((0,),),),
                       np.array([1.0]), np.array([1.0]))


# --- graph generation -------------------------------------------------------------


def test_barabasi_albert_examples():
    g = generate_barabasi_albert(3, 1, seed=0)
    assert g.num_edges == 4
    assert g.degree().sum() == 2 * g.num_edges
    g50 = generate_barabasi_albert(50, 2, seed=9)
    assert g50.num_edges == 2 * (2 + 2 * (50 - 3))
    assert g50.edge_list() == generate_barabasi_albert(50, 2, seed=9).edge_list()
    assert g50.edge_list() != generate_barabasi_albert(50, 2, seed=10).edge_list()
    with pytest.raises(ConfigurationError):
        generate_barabasi_albert(2, 2, seed=0)


def test_barabasi_albert_structure():
    g = generate_barabasi_albert(40, 3, seed=4)
    pairs = g.edge_list()
    # arcs come in opposed pairs, no self loops, no parallel undirected edges
    for i in range(0, len(pairs), 2):
        (u, v), (a, b) = pairs[i], pairs[i + 1]
        assert (a, b) == (v, u) and u != v
    undirected = {frozenset(p) for p in pairs}
    assert len(undirected) == len(pairs) // 2
    ug = nx.Graph([tuple(e) for e in undirected])
    assert nx.is_connected(ug) and ug.number_of_nodes() == 40


# --- path enumeration ------------------------------------------------------------------


def test_path_examples():
    assert enumerate_min_hop_paths(DiGraph(2, [0], [1]), 0, 1, 3) == [(0,)]
    # diamond o=0, a=1, b=2, d=3
    diamond = DiGraph(4, [0, 0, 1, 2], [1, 2, 3, 3])
    assert enumerate_min_hop_paths(diamond, 0, 3, 2) == [(0, 2), (1, 3)]
    with pytest.raises(Unreachable):
        enumerate_min_hop_paths(diamond, 3, 0, 1)
    with pytest.raises(ConfigurationError):
        enumerate_min_hop_paths(diamond, 0, 3, 0)


@settings(max_examples=40)
@given(st.integers(5, 12), st.integers(1, 2), st.integers(0, 10**6), st.integers(1, 12))
def test_paths_match_exhaustive_oracle(n, m, seed, k):
    graph = generate_barabasi_albert(n, m, seed)
    rng = np.random.default_rng(seed)
    o, d = rng.choice(n, 2, replace=False)
    got = enumerate_min_hop_paths(graph, int(o), int(d), k)
    assert got == oracle_paths(graph, int(o), int(d), k)
    keys = [(len(p), p) for p in got]
    assert keys == sorted(set(keys))
    for p in got:
        verts = path_vertices(graph, int(o), p)
        assert verts[-1] == d and len(set(verts)) == len(verts)


# --- instances --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_instance():
    return generate_tap_instance(15, 12, 4, seed=3)


def test_instance_structure(small_instance):
    inst, x0 = small_instance
    cs = inst.constraints()
    a = cs.a_matrix
    assert a.shape == (inst.num_pairs, inst.num_paths)
    for i, label in enumerate(np.unique(inst.block_labels)):
        np.testing.assert_array_equal(a[i], (inst.block_labels == label).astype(float))
    np.testing.assert_array_equal(cs.b_vector, inst.demands)
    assert np.all(x0 > 0) and cs.residual(x0) <= 1e-15
    assert np.all((inst.demands >= 1e-3) & (inst.demands <= 1))
    assert np.all((inst.edge_a >= 0) & (inst.edge_a <= 10)) and np.all((inst.edge_b >= 0) & (inst.edge_b <= 1))
    assert len({(o, d) for o, d in zip(inst.origins, inst.destinations)}) == inst.num_pairs
    inc = inst.path_edge_incidence
    np.testing.assert_array_equal(inst.edge_path_multiplicity, np.asarray(inc.T.sum(axis=1)).ravel())
    p = 0
    for block in inst.paths:
        for path in block:
            assert sorted(inc[p].indices.tolist()) == sorted(path)
            p += 1


def test_instance_determinism_and_round_trip(small_instance):
    inst, _ = small_instance
    again, _ = generate_tap_instance(15, 12, 4, seed=3)
    assert inst.to_dict() == again.to_dict()
    back = TapInstance.from_dict(inst.to_dict())
    assert back.to_dict() == inst.to_dict()
    assert generate_tap_instance(15, 12, 4, seed=4)[0].to_dict() != inst.to_dict()


def test_broken_path_rejected(small_instance):
    doc = small_instance[0].to_dict()
    doc["od_pairs"][0]["paths"][0] = doc["od_pairs"][0]["paths"][0][1:] or [999]
    with pytest.raises(ValueError):
        TapInstance.from_dict(doc)


def test_generation_failure():
    with pytest.raises(GenerationFailed):
        generate_tap_instance(4, 100, 2, seed=0)


# --- objective ------------------------------------------------------------------------------


def test_objective_examples(small_instance):
    one = single_edge_instance()
    x = np.array([2.0])
    assert tap_objective(one, "PathCostSum", x) == 3.0
    assert tap_objective(one, "TotalEdgeLatency", x) == 6.0
    inst, _ = small_instance
    zero = np.zeros(inst.num_paths)
    assert tap_objective(inst, "PathCostSum", zero) == pytest.approx(inst.edge_path_multiplicity @ inst.edge_a)
    assert tap_objective(inst, "TotalEdgeLatency", zero) == 0.0
    np.testing.assert_allclose(tap_gradient(inst, "TotalEdgeLatency", zero), inst.path_edge_incidence @ inst.edge_a)
    with pytest.raises(ConfigurationError):
        tap_objective(inst, "PathCostSum", np.zeros(3))


def test_path_cost_sum_gradient_vanishes_without_congestion():
    graph = DiGraph(3, [0, 1, 0], [1, 2, 2])
    inst = TapInstance(graph, np.array([0]), np.array([2]), np.array([1.0]), (((2,), (0, 1)),),
                       np.array([1.0, 2.0, 3.0]), np.zeros(3))
    assert not tap_gradient(inst, "PathCostSum", np.array([0.4, 0.6])).any()


@pytest.mark.parametrize("mode", MODES)
def test_gradient_finite_differences(small_instance, rng, mode):
    inst, _ = small_instance
    for _ in range(20):
        x = rng.uniform(0.01, 1.0, inst.num_paths)
        g = tap_gradient(inst, mode, x)
        fd = central_diff(lambda y: tap_objective(inst, mode, y), x, 1e-5)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_load_linearity(seed, t):
    inst, _ = generate_tap_instance(10, 5, 3, seed=7)
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, 1, (2, inst.num_paths))
    np.testing.assert_allclose(inst.loads(t * x + (1 - t) * y), t * inst.loads(x) + (1 - t) * inst.loads(y), atol=1e-12)


def test_lipschitz_constants(small_instance):
    inst, _ = small_instance
    assert tap_lipschitz(inst, "PathCostSum") == 0.0
    inc = inst.path_edge_incidence.toarray()
    hess = 2 * inc @ np.diag(inst.edge_b) @ inc.T
    assert tap_lipschitz(inst, "TotalEdgeLatency") == pytest.approx(np.linalg.norm(hess, 2), rel=1e-6)


def test_path_cost_sum_optimum_matches_linprog(small_instance):
    inst, _ = small_instance
    problem = tap_problem(inst, "PathCostSum")
    cs = problem.constraints
    g = problem.eval_grad(problem.start)
    res = linprog(g, A_eq=cs.a_matrix, b_eq=cs.b_vector, bounds=(0, None), method="highs")
    x_star, f_star = path_cost_sum_optimum(inst)
    assert problem.eval_f(res.x) == pytest.approx(f_star, rel=1e-12)
    assert problem.known_optimum[1] == f_star
    assert cs.residual(x_star) <= 1e-14


@pytest.mark.parametrize("seed", [21, 22, 23])
def test_hba_reaches_total_latency_optimum(seed):
    inst, x0 = generate_tap_instance(12, 6, 3, seed=seed)
    problem = tap_problem(inst, "TotalEdgeLatency")
    cs = problem.constraints
    ref = minimize(problem.eval_f, x0, jac=problem.eval_grad, method="SLSQP", bounds=[(0, None)] * x0.size,
                   constraints=[{"type": "eq", "fun": lambda x: cs.a_matrix @ x - cs.b_vector, "jac": lambda x: cs.a_matrix}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    report = hba_solve(problem, x0, config=SolverConfig(max_iterations=100000))
    assert report.violations == []
    # at the precision floor Armijo cannot certify decrease; the last iterate is still optimal
    if report.termination is Termination.NUMERICAL_FAILURE:
        assert "rounding level" in report.message
    else:
        assert report.termination is Termination.TOLERANCE_MET
    assert report.final_f == pytest.approx(ref.fun, rel=1e-8)

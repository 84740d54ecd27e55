import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalid.envs import ILLUSTRATIVE_FUNCTIONS, illustrative_graph, mesh_graph
from causalid.scm import (
    ENDOGENOUS,
    EXOGENOUS,
    CausalGraph,
    Dataset,
    GraphError,
    GroundTruthScm,
    Intervention,
    Normal,
    Range,
    ScmError,
    VariableSpec,
    dataset_push,
    evaluate_scm,
    topological_order,
    validate_graph,
)


def chain_scm():
    return GroundTruthScm(illustrative_graph(), ILLUSTRATIVE_FUNCTIONS)


def test_chain_graph_is_valid():
    assert validate_graph(illustrative_graph()) is None


def test_self_loop_is_cycle():
    g = CausalGraph(
        (VariableSpec("U", EXOGENOUS), VariableSpec("Y", ENDOGENOUS)),
        (("U", "Y"), ("Y", "Y")),
    )
    assert validate_graph(g)[0] == "cycle"


def test_two_node_cycle():
    g = CausalGraph(
        (VariableSpec("A", ENDOGENOUS), VariableSpec("B", ENDOGENOUS)),
        (("A", "B"), ("B", "A")),
    )
    assert validate_graph(g)[0] == "cycle"
    with pytest.raises(GraphError) as err:
        g.check()
    assert err.value.violation == "cycle"


def test_edge_into_exogenous():
    g = CausalGraph(
        (VariableSpec("U", EXOGENOUS), VariableSpec("X", ENDOGENOUS)),
        (("X", "U"),),
    )
    assert validate_graph(g)[0] == "edge into exogenous"


def test_duplicate_id():
    g = CausalGraph((VariableSpec("X", ENDOGENOUS), VariableSpec("X", ENDOGENOUS)), ())
    assert validate_graph(g)[0] == "duplicate variable id"


def test_ranges():
    with pytest.raises(ScmError):
        Range.interval(1, 0)
    with pytest.raises(ScmError):
        Range(0, 0, ())
    d = Range.discrete([3, 1, 2])
    assert d.values == (1.0, 2.0, 3.0)
    assert d.contains(2) and not d.contains(2.5)
    assert d.clip(2.4) == 2.0
    u = Range.unbounded()
    assert u.contains(1e300) and u.contains(-math.inf)


def test_topological_order_chain():
    assert topological_order(illustrative_graph()) == ["U", "X", "Z", "Y"]


def test_topological_order_mesh_places_loads_before_responses():
    order = topological_order(mesh_graph(1))
    pos = {v: i for i, v in enumerate(order)}
    for i in (1, 2):
        assert pos[f"B{i}"] < pos[f"Lc{i}"] and pos[f"L{i}"] < pos[f"Lc{i}"]
        assert pos["Lc1"] < pos[f"R{i}"] and pos["Lc2"] < pos[f"R{i}"]


def test_topological_order_single_node():
    g = CausalGraph((VariableSpec("U", EXOGENOUS),), ())
    assert topological_order(g) == ["U"]


def test_topological_order_tie_break_by_id():
    g = CausalGraph(
        (VariableSpec("b", EXOGENOUS), VariableSpec("a", EXOGENOUS), VariableSpec("c", ENDOGENOUS)),
        (("b", "c"), ("a", "c")),
    )
    assert topological_order(g) == ["a", "b", "c"]


def test_evaluate_passive():
    s = evaluate_scm(chain_scm(), {"U": 0.1})
    assert s["X"] == 0.1
    assert s["Z"] == pytest.approx(math.exp(-0.1), abs=1e-15)
    assert s["Y"] == pytest.approx(math.cos(math.exp(-0.1)) - math.exp(-math.exp(-0.1) / 20), abs=1e-15)


def test_evaluate_do_x_cuts_u():
    for u in (-0.5, 0.0, 0.7):
        s = evaluate_scm(chain_scm(), {"U": u}, Intervention({"X": 2.0}))
        assert s["Z"] == pytest.approx(0.1353352832366127, abs=1e-15)


def test_evaluate_do_y_leaves_ancestors():
    passive = evaluate_scm(chain_scm(), {"U": 0.3})
    s = evaluate_scm(chain_scm(), {"U": 0.3}, Intervention({"Y": 0.0}))
    assert s["Y"] == 0.0
    assert s["X"] == passive["X"] and s["Z"] == passive["Z"]


def test_evaluate_clips_to_range():
    s = evaluate_scm(chain_scm(), {"U": 0.0}, Intervention({"X": -5.0}))
    assert s["Z"] == 20.0


def test_evaluate_errors():
    with pytest.raises(ScmError):
        evaluate_scm(chain_scm(), {})
    with pytest.raises(ScmError):
        evaluate_scm(chain_scm(), {"U": 0.0}, Intervention({"X": 7.0}))


def test_uncontrollable_intervention_rejected():
    g = CausalGraph(
        (VariableSpec("U", EXOGENOUS, False, distribution=Normal(0, 1)), VariableSpec("X", ENDOGENOUS, True, Range.interval(-1, 1))),
        (("U", "X"),),
    )
    scm = GroundTruthScm(g, {"X": lambda x: x[0]})
    with pytest.raises(ScmError):
        evaluate_scm(scm, {"U": 0.0}, Intervention({"U": 0.0}))


def test_evaluation_never_reads_unresolved_parent():
    g = illustrative_graph()
    resolved = ["U"]
    fns = {}
    for v, fn in ILLUSTRATIVE_FUNCTIONS.items():
        def wrapped(x, v=v, fn=fn):
            assert all(p in resolved for p in g.parents(v))
            resolved.append(v)
            return fn(x)

        fns[v] = wrapped
    evaluate_scm(GroundTruthScm(g, fns), {"U": 0.2})
    assert resolved == ["U", "X", "Z", "Y"]


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.sampled_from(["X", "Z"]), st.floats(-5, 5))
def test_intervened_value_exact_and_descendants_via_target(u, target, value):
    scm = chain_scm()
    do = Intervention({target: value})
    s = evaluate_scm(scm, {"U": u}, do)
    assert s[target] == value
    # descendants only see the target: changing U does not change them
    s2 = evaluate_scm(scm, {"U": u + 1.0}, do)
    for d in illustrative_graph().descendants(target):
        assert s2[d] == s[d]


def test_evaluate_deterministic():
    assert evaluate_scm(chain_scm(), {"U": 0.4}) == evaluate_scm(chain_scm(), {"U": 0.4})


def test_intervention_format_roundtrip():
    u = Intervention({"Z": 1.5, "X": -2.0})
    assert u.kind == "X+Z"
    assert Intervention.parse(u.kind, u.format_values()) == u
    assert Intervention.passive().kind == "passive"
    assert Intervention.parse("passive", "") == Intervention()


def test_fifo_capacity():
    ds = Dataset(10)
    for i in range(10):
        ds.push(Intervention(), {"i": i})
    dataset_push(ds, (Intervention(), {"i": 10}))
    assert len(ds) == 10
    assert ds[0][1]["i"] == 1


def test_unbounded_push_and_retrieve():
    ds = Dataset()
    rec = (Intervention({"X": 1.0}), {"X": 1.0, "U": 0.0})
    dataset_push(ds, rec)
    assert len(ds) == 1 and ds[0] == rec
    dataset_push(ds, rec)
    assert len(ds) == 2


@given(st.integers(1, 8), st.integers(0, 30))
def test_fifo_eviction_order_is_insertion_order(cap, n):
    ds = Dataset(cap)
    for i in range(n):
        ds.push(Intervention(), {"i": i})
    assert [r[1]["i"] for r in ds] == list(range(max(0, n - cap), n))


def test_dataset_capacity_must_be_positive():
    with pytest.raises(ScmError):
        Dataset(0)

import numpy as np
import pytest

from oracles import BASE, eliminate_brute_force, random_graph, transfer_error
from ibrstab.assembly import (AssembledSystem, ConnectionError_, ConnectionGraph, assemble_full_grid,
                              assemble_rest_of_grid, connect, connect_unit, kcl_junction, rotation_direction)
from ibrstab.components.block import Port, PortKind, StateSpaceBlock
from ibrstab.components.passive import capacitor_block, rl_block
from ibrstab.loadflow import init_dynamic_states
from ibrstab.stability import is_stable, spectrum

N_GRAPHS = 200
N_FREQ = 20


def scalar_block(label, A, B, C, D, n_in=1, n_out=1):
    ins = [Port(f"u{k}", PortKind.P_REF) for k in range(n_in)]
    outs = [Port(f"y{k}", PortKind.P_REF) for k in range(n_out)]
    return StateSpaceBlock(label, A, B, C, D, ins, outs)


def integrator(label):
    return scalar_block(label, [[0.0]], [[1.0]], [[1.0]], [[0.0]])


def test_random_interconnections_match_elimination():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(N_GRAPHS):
        blocks, graph = random_graph(rng)
        try:
            sys = connect(blocks, graph)
        except ConnectionError_ as exc:
            assert "ill-posed" in str(exc)
            continue
        for _ in range(N_FREQ):
            s = complex(rng.uniform(-0.5, 0.5), 10 ** rng.uniform(-2, 3))
            ref = eliminate_brute_force(blocks, graph, s)
            got = sys.transfer(s)
            assert transfer_error(got, ref) <= 1e-9
        checked += 1
    assert checked >= 0.95 * N_GRAPHS


def test_series_integrators():
    g = ConnectionGraph().wire(("a", "y0"), ("b", "u0")).expose_input(("a", "u0")).expose_output(("b", "y0"))
    sys = connect([integrator("a"), integrator("b")], g)
    assert np.array_equal(sys.A, [[0.0, 0.0], [1.0, 0.0]])
    s = 0.3 + 2j
    assert sys.transfer(s)[0, 0] == pytest.approx(1 / s**2)


def test_negative_feedback_loop():
    neg = scalar_block("k", np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[-1.0]])
    g = ConnectionGraph().wire(("a", "y0"), ("k", "u0")).wire(("k", "y0"), ("a", "u0"))
    sys = connect([integrator("a"), neg], g)
    assert np.array_equal(sys.A, [[-1.0]])


def test_algebraic_loop_resolved():
    # y = 0.5 u0 + w, u0 = 0.5 y  ->  y = w / (1 - 0.25)
    k = scalar_block("k", np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((1, 0)), [[0.5, 1.0]], n_in=2)
    h = scalar_block("h", np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[0.5]])
    g = (ConnectionGraph().wire(("k", "y0"), ("h", "u0")).wire(("h", "y0"), ("k", "u0"))
         .expose_input(("k", "u1")).expose_output(("k", "y0")))
    sys = connect([k, h], g)
    assert sys.D[0, 0] == pytest.approx(1.0 / 0.75)


def test_ill_posed_loop_rejected():
    k = scalar_block("k", np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
    h = scalar_block("h", np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
    g = ConnectionGraph().wire(("k", "y0"), ("h", "u0")).wire(("h", "y0"), ("k", "u0"))
    with pytest.raises(ConnectionError_, match="ill-posed"):
        connect([k, h], g)


def test_dangling_and_double_driven_inputs():
    with pytest.raises(ConnectionError_, match="dangling"):
        connect([integrator("a")], ConnectionGraph())
    g = ConnectionGraph().wire(("a", "y0"), ("a", "u0")).expose_input(("a", "u0"))
    with pytest.raises(ConnectionError_, match="driven twice"):
        connect([integrator("a")], g)


def test_kind_mismatch_rejected():
    cap = capacitor_block("c", 0.1, BASE.omega_base)
    g = ConnectionGraph().wire(("c", "v"), ("c", "i"))
    with pytest.raises(ConnectionError_, match="kind mismatch"):
        connect([cap], g)


def test_unknown_ports_and_duplicate_labels():
    with pytest.raises(ConnectionError_, match="unknown block"):
        connect([integrator("a")], ConnectionGraph().expose_input(("b", "u0")))
    with pytest.raises(ConnectionError_, match="no input port"):
        connect([integrator("a")], ConnectionGraph().expose_input(("a", "zz")))
    with pytest.raises(ConnectionError_, match="duplicate"):
        connect([integrator("a"), integrator("a")], ConnectionGraph())
    with pytest.raises(ConnectionError_):
        kcl_junction(("a", "i"), [])


def test_junction_node_with_two_branches():
    """A capacitor node fed by one RL branch from a driven voltage and one to ground."""
    w = BASE.omega_base
    line = rl_block("L", 0.01, 0.1, w)
    shunt = rl_block("G", 1.0, 0.2, w, two_terminal=False)
    cap = capacitor_block("C", 0.05, w)
    g = ConnectionGraph()
    g.expose_input(("L", "v_from"))
    g.wire(("C", "v"), ("L", "v_to")).wire(("C", "v"), ("G", "v"))
    g.junction(("C", "i"), [(("L", "i_to"), -1.0), (("G", "i"), -1.0)])
    g.expose_output(("C", "v"))
    sys = connect([line, shunt, cap], g)
    # dc: divider between the line and the node admittance (shunt plus j b)
    y1, y_node = 1 / complex(0.01, 0.1), 1 / complex(1.0, 0.2) + 0.05j
    ratio = y1 / (y1 + y_node)
    H = sys.transfer(0.0)
    assert complex(H[0, 0], H[1, 0]) == pytest.approx(ratio, rel=1e-12)
    assert is_stable(sys)


def test_block_order_does_not_change_result():
    rng = np.random.default_rng(5)
    for _ in range(20):
        blocks, graph = random_graph(rng)
        try:
            a = connect(blocks, graph)
        except ConnectionError_:
            continue
        perm = [blocks[i] for i in rng.permutation(len(blocks))]
        b = connect(perm, graph)
        s = 0.1 + 3j
        assert np.allclose(a.transfer(s), b.transfer(s), rtol=1e-10, atol=1e-12)
        la = np.sort_complex(np.linalg.eigvals(a.A)) if a.n_states else []
        lb = np.sort_complex(np.linalg.eigvals(b.A)) if b.n_states else []
        assert np.allclose(la, lb, rtol=1e-8, atol=1e-8)


def test_assembled_json_round_trip(solved):
    net, sol, init = solved(1)
    sys = assemble_full_grid(net, init, sol)
    back = AssembledSystem.from_dict(sys.to_dict())
    assert np.array_equal(back.A, sys.A) and back.state_labels == sys.state_labels


@pytest.mark.parametrize("sc", [1, 2, 3, 4])
def test_full_grid_stable(solved, sc):
    net, sol, init = solved(sc)
    sys = assemble_full_grid(net, init, sol)
    assert is_stable(sys)


def test_frame_rotation_leaves_spectrum_unchanged(solved):
    net, sol, init = solved(1)
    ref, _ = spectrum(assemble_full_grid(net, init, sol))
    for phi in (0.4, -2.0):
        rot = sol.rotated(phi)
        lam, _ = spectrum(assemble_full_grid(net, init_dynamic_states(net, rot), rot))
        scale = np.max(np.abs(ref))
        assert np.max(np.abs(np.sort_complex(lam) - np.sort_complex(ref))) <= 1e-9 * scale


def test_rotation_direction_is_zero_mode(solved):
    net, sol, init = solved(1)
    sys = assemble_full_grid(net, init, sol)
    r = sys.rotation_mode
    assert np.linalg.norm(sys.A @ r) <= 1e-8 * np.linalg.norm(sys.A) * np.linalg.norm(r)


def test_rotation_direction_pairs():
    labels = (("L", "i_d"), ("L", "i_q"), ("G", "delta"), ("I", "g_d"), ("I", "g_q"))
    r = rotation_direction(labels, np.array([0.3, -0.2, 1.0, 5.0, 6.0]))
    assert np.allclose(r, [0.2, 0.3, 1.0, 0.0, 0.0])


def test_rest_of_grid_closes_to_full_grid(solved):
    """Cutting the network at a unit's bus and reconnecting gives the same spectrum."""
    from ibrstab.components.machine import linearize_sg

    net, sol, init = solved(1)
    full = np.linalg.eigvals(assemble_full_grid(net, init, sol).A)
    g = net.sg_at("10")
    grid, _ = assemble_rest_of_grid(net, init, sol, "10")
    unit = linearize_sg(g, init[g.id], net.base)
    lam = np.linalg.eigvals(connect_unit(unit, grid).A)
    assert len(lam) == len(full)
    assert np.max(np.abs(np.sort_complex(lam) - np.sort_complex(full))) <= 1e-8 * np.max(np.abs(full))

import numpy as np
import pytest

from conftest import make_panel
from glad.core import split_panel
from glad.data import (FormatError, InjectionError, InjectionSpec, SynthSpec, assemble_panel,
                       generate_synthetic, inject_anomalies, load_wide_csv, load_yahoo_csv, read_yahoo_file,
                       write_edge_list, write_wide_csv, write_yahoo_file)
from glad.graph import build_neighbor_table


def test_yahoo_round_trip(tmp_path):
    p = make_panel([[1.5, 2.0, -3.25]], labels=np.array([[False, True, False]]), ids=["real_1"])
    write_yahoo_file(p, tmp_path / "real_1.csv")
    q = read_yahoo_file(tmp_path / "real_1.csv")
    assert q.node_ids == ("real_1",)
    np.testing.assert_array_equal(q.values, p.values)
    np.testing.assert_array_equal(q.labels, p.labels)


def test_yahoo_alternative_column_names(tmp_path):
    (tmp_path / "a.csv").write_text("timestamps,value,anomaly\n1,2.0,0\n2,3.0,1\n")
    p = read_yahoo_file(tmp_path / "a.csv")
    assert p.labels.tolist() == [[False, True]]


@pytest.mark.parametrize("content,msg", [
    ("", "empty"),
    ("time,value,is_anomaly\n1,2,0\n", "timestamp"),
    ("timestamp,is_anomaly\n1,0\n", "value"),
    ("timestamp,value\n1,2\n", "is_anomaly"),
    ("timestamp,value,is_anomaly\n1,2,0\n2,abc,0\n", "row 3"),
])
def test_yahoo_format_errors_name_the_problem(tmp_path, content, msg):
    f = tmp_path / "bad.csv"
    f.write_text(content)
    with pytest.raises(FormatError, match=msg):
        read_yahoo_file(f)


def test_yahoo_directory_and_assembly(tmp_path):
    for k in range(3):
        write_yahoo_file(make_panel([[float(k)] * 5], ids=[f"s{k}"]), tmp_path / f"s{k}.csv")
    panels = load_yahoo_csv(tmp_path)
    big = assemble_panel(panels)
    assert big.node_ids == ("s0", "s1", "s2") and big.values.shape == (3, 5)
    with pytest.raises(ValueError, match="length"):
        assemble_panel([panels[0], make_panel([[1.0] * 4])])
    with pytest.raises(FormatError):
        load_yahoo_csv(tmp_path / "nothing")


def test_wide_round_trip_with_missing_and_labels(tmp_path):
    v = np.array([[1.0, np.nan, 3.0], [0.5, 0.25, 0.0]])
    lab = np.array([[True, False, False], [False, False, True]])
    p = make_panel(v, labels=lab, ids=["a", "b"])
    write_wide_csv(p, tmp_path / "p.csv", tmp_path / "l.csv")
    q, g = load_wide_csv(tmp_path / "p.csv", labels_file=tmp_path / "l.csv")
    assert g is None
    np.testing.assert_array_equal(q.mask, p.mask)
    np.testing.assert_array_equal(q.labels, lab)
    # 0.0 is a value unless declared as the missing sentinel
    q0, _ = load_wide_csv(tmp_path / "p.csv", missing_value=0.0)
    assert not q0.mask[1, 2]


def test_edge_list_resolves_ids(tmp_path):
    (tmp_path / "p.csv").write_text("timestamp,x,y,z\n0,1,2,3\n1,1,2,3\n")
    (tmp_path / "e.csv").write_text("src,dst,weight\nx,y,1.0\nz,y,2.0\n")
    p, g = load_wide_csv(tmp_path / "p.csv", tmp_path / "e.csv")
    assert g.sorted_edges() == [(0, 1), (1, 2)]
    (tmp_path / "bad.csv").write_text("src,dst\nx,q\n")
    with pytest.raises(FormatError, match="'q'"):
        load_wide_csv(tmp_path / "p.csv", tmp_path / "bad.csv")
    write_edge_list(g, p.node_ids, tmp_path / "out.csv")
    assert (tmp_path / "out.csv").read_text() == "src,dst\nx,y\ny,z\n"


def test_wide_ragged_row_rejected(tmp_path):
    (tmp_path / "p.csv").write_text("timestamp,x,y\n0,1\n")
    with pytest.raises(FormatError, match="row 2"):
        load_wide_csv(tmp_path / "p.csv")


def test_injection_multiply_and_labels():
    p = make_panel(np.full((5, 400), 10.0))
    spec = InjectionSpec(n_affected_nodes=2, events_per_node=3, factor=0.2, min_separation=50, seed=1)
    q = inject_anomalies(p, spec, range(100, 400))
    lab = q.label_matrix()
    assert lab.sum() == 6 and lab.any(axis=1).sum() == 2
    assert np.all(q.values[lab] == 2.0) and not lab[:, :100].any()
    for row in lab:
        t = np.flatnonzero(row)
        assert np.all(np.diff(t) >= 50)


def test_injection_subtract_uses_node_std():
    v = np.tile([0.0, 2.0], (1, 100))
    q = inject_anomalies(make_panel(v), InjectionSpec(n_affected_nodes=1, events_per_node=1,
                                                      drop_mode="subtract", magnitude=3.0), range(0, 200))
    t = np.flatnonzero(q.labels[0])[0]
    assert q.values[0, t] == v[0, t] - 3.0


def test_injection_that_cannot_fit_fails():
    p = make_panel(np.ones((2, 100)))
    with pytest.raises(InjectionError):
        inject_anomalies(p, InjectionSpec(events_per_node=3, min_separation=60, affected_fraction=1.0),
                         range(0, 100))


def test_injection_is_seeded():
    p = make_panel(np.ones((6, 300)))
    a = inject_anomalies(p, InjectionSpec(seed=4), range(0, 300))
    b = inject_anomalies(p, InjectionSpec(seed=4), range(0, 300))
    assert np.array_equal(a.labels, b.labels)


def test_synthetic_generator_shape_and_graph():
    panel, g = generate_synthetic(SynthSpec(n_nodes=12, T=500, seed=3))
    assert panel.values.shape == (12, 500) and g.is_connected()
    assert panel.labels is None or not panel.labels.any()
    again, g2 = generate_synthetic(SynthSpec(n_nodes=12, T=500, seed=3))
    assert np.array_equal(panel.values, again.values) and g.edges == g2.edges


def test_synthetic_neighbors_carry_lagged_signal():
    panel, g = generate_synthetic(SynthSpec(n_nodes=20, T=3000, seed=0))
    M = build_neighbor_table(g).mean_matrix()
    y = panel.values
    tr, _, _ = split_panel(panel, 0.6, 0.2)

    def resid_var(cols):
        X = np.column_stack(cols + [np.ones(y[:, 2:].size)])
        target = y[:, 2:].ravel()
        beta = np.linalg.lstsq(X, target, rcond=None)[0]
        return np.var(target - X @ beta)

    own = [y[:, 1:-1].ravel(), y[:, :-2].ravel()]
    nbr = [(M @ y)[:, :-2].ravel()]
    assert resid_var(own + nbr) < 0.97 * resid_var(own)

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import binom_units
from zexplore import paperdata
from zexplore.likelihood import Family
from zexplore.render import (TableOptions, cdf_density_svg, lineup_svg, matrix_csv, scatter_svg,
                             symbols_svg, table_cells, table_text, vectors_csv)
from zexplore.zmatrix import ZMatrix, compute_z, density_weights

BIN = Family.binomial()
SVG = "{http://www.w3.org/2000/svg}"


def fake(entries):
    e = np.asarray(entries, dtype=float)
    n = len(e)
    units = tuple(binom_units([(1, 2)] * n))
    return ZMatrix(tuple(u.unit_id for u in units), np.full((n, 1), 0.5), e, units, BIN)


def parse_svg(text):
    root = ET.fromstring(text.encode())
    assert root.tag == f"{SVG}svg"
    assert root.get("version") == "1.1"
    assert len(root.get("viewBox").split()) == 4
    return root


def test_cell_formatting():
    z = fake([[0.1923, 0.0004], [0.0005, 1.0]])
    opts = TableOptions(transpose=False, label_covariate=None)
    assert table_cells(z, opts) == [[192, None], [None, 1000]]
    text = table_text(z, opts)
    assert "192" in text and "1,000" in text
    lines = text.splitlines()
    assert lines[0].split() == ["Unit", "u0", "u1"]
    assert lines[1].split() == ["u0", "192"]


def test_suppression_rules():
    z = fake([[0.0007, 0.9993], [0.5, 0.5]])
    post = table_cells(z, TableOptions(transpose=False))
    pre = table_cells(z, TableOptions(transpose=False, post_rounding=False))
    assert post[0][0] == 1 and pre[0][0] is None
    assert post[1] == pre[1] == [500, 500]


def test_half_even_rounding():
    z = fake([[0.0025, 0.9975], [0.0035, 0.9965]])
    cells = table_cells(z, TableOptions(transpose=False, suppress_below=0))
    assert cells == [[int(np.rint(2.5)), int(np.rint(997.5))], [int(np.rint(3.5)), 996]]


def test_transpose_puts_rows_in_columns():
    z = fake([[0.7, 0.3], [0.1, 0.9]])
    assert table_cells(z) == [[700, 100], [300, 900]]


def test_table_cell_count_and_blanks():
    z = compute_z(paperdata.load("cad_recall"), BIN)
    cells = table_cells(z)
    assert sum(len(r) for r in cells) == z.n ** 2
    scaled = z.entries.T * 1000
    for i, row in enumerate(cells):
        for j, c in enumerate(row):
            assert (c is None) == (np.rint(scaled[i, j]) < 1)


def test_table_options_validation():
    with pytest.raises(ValueError):
        TableOptions(scale=0)
    with pytest.raises(ValueError):
        TableOptions(suppress_below=-1)


def test_center_labels():
    z = compute_z(paperdata.load("cad_recall"), BIN)
    head = table_text(z).splitlines()[0].split()
    assert head[0] == "Center" and len(head) == z.n + 1


def test_csv_is_full_precision():
    z = compute_z(paperdata.load("dual_first_detection"), BIN)
    rows = [line.split(",") for line in matrix_csv(z).splitlines()]
    assert rows[0][1:] == list(z.order)
    back = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    np.testing.assert_array_equal(back, z.entries)
    assert vectors_csv({"id": ["a", "b"], "v": [0.1, 0.25]}) == "id,v\na,0.1\nb,0.25\n"


def test_symbols_identity_and_uniform():
    ident = parse_svg(symbols_svg(fake(np.eye(3))))
    cells = ident.findall(f"{SVG}rect[@class='cell']")
    assert len(cells) == 3
    assert {c.get("width") for c in cells} == {"16"}
    uni = parse_svg(symbols_svg(fake(np.full((3, 3), 1 / 3))))
    sides = {c.get("width") for c in uni.findall(f"{SVG}rect[@class='cell']")}
    assert len(sides) == 1 and len(uni.findall(f"{SVG}rect[@class='cell']")) == 9


def test_svgs_deterministic_and_well_formed():
    z = compute_z(paperdata.load("dual_first_detection"), BIN)
    dens, cdf = density_weights(z)
    makers = [
        lambda: symbols_svg(z),
        lambda: symbols_svg(z, transpose=True),
        lambda: cdf_density_svg(dens, cdf, z.estimates[:, 0]),
        lambda: scatter_svg(z.estimates[:, 0], z.covariate("center"), ["1"] * z.n, log10_x=True),
        lambda: lineup_svg([z.entries] * 4, 2, 2),
    ]
    for make in makers:
        a, b = make(), make()
        assert a == b
        parse_svg(a)


def test_cdf_density_inputs():
    with pytest.raises(ValueError):
        cdf_density_svg([1.0], [1.0], [0.3])
    with pytest.raises(ValueError):
        cdf_density_svg([0.5, 0.5], [0.5, 1.0], [0.0, 0.3])
    parse_svg(cdf_density_svg([0.5, 0.5], [0.5, 1.0], [0.0, 0.3], log10_x=False))


def test_scatter_edge_cases():
    empty = parse_svg(scatter_svg([], []))
    assert empty.findall(f"{SVG}line") and not empty.findall(f"{SVG}text[@class='point']")
    flat = parse_svg(scatter_svg([1, 2, 3], [5, 5, 5], ["a", "b", "c"]))
    ys = {t.get("y") for t in flat.findall(f"{SVG}text[@class='point']")}
    assert len(ys) == 1
    with pytest.raises(ValueError):
        scatter_svg([1, 2], [1])


def test_lineup_panel_count():
    root = parse_svg(lineup_svg([np.eye(2)] * 3, 2, 2))
    assert len(root.findall(f"{SVG}g[@class='panel']")) == 3

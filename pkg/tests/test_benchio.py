"""Configuration parsing, presets, manufactured solutions, CSV/VTK export."""

import json

import numpy as np
import pytest

from spnfem.amr import AmrIterationRecord
from spnfem.benchio import (
    config_from_dict,
    config_to_dict,
    emit_config,
    export_csv,
    export_vtk,
    l2_error_phi,
    mms_problem,
    parse_config,
    read_csv_records,
    realize,
    takeda_preset,
)
from spnfem.coefficients import material_from_diffusion
from spnfem.errors import SchemaError
from spnfem.mesh import BCKind


class TestParseConfig:
    def test_preset_round_trips(self):
        for name in ("mono1", "mono2", "ddm1", "ddm2"):
            for dim in (2, 3):
                cfg = takeda_preset(name, dim=dim)
                again = parse_config(emit_config(cfg))
                assert again == cfg

    def test_preset_contents(self):
        cfg = takeda_preset("mono1", dim=3)
        assert len(cfg.materials) == 3
        assert cfg.groups == 2
        assert cfg.source["core"] == [9.09319e-3, 2.90183e-1]
        assert cfg.theta == 0.5 and cfg.eps_rel == 4e-3

    def test_ddm_preset_layout(self):
        cfg = takeda_preset("ddm1", dim=3)
        assert len(cfg.subdomains) == 6
        assert cfg.subdomains[0].box == [[0.0, 15.0], [0.0, 15.0], [0.0, 15.0]]
        assert cfg.theta == [0.5] * 6
        cfg2 = takeda_preset("ddm2", dim=3)
        assert cfg2.theta == [0.2, 0.7, 0.2, 0.2, 0.2, 0.2]

    def test_missing_cross_section_key(self):
        data = config_to_dict(takeda_preset("mono1", dim=2))
        del data["materials"]["core"]["sigma_t"]
        with pytest.raises(SchemaError) as err:
            config_from_dict(data)
        assert any("materials.core.sigma_t" in p for p in err.value.problems)

    def test_theta_out_of_range(self):
        data = config_to_dict(takeda_preset("mono1", dim=2))
        data["amr"]["theta"] = 1.5
        with pytest.raises(SchemaError) as err:
            config_from_dict(data)
        assert any("theta" in p for p in err.value.problems)

    def test_invalid_json(self):
        with pytest.raises(SchemaError):
            parse_config("{not json")


class TestRealize:
    def test_benchmark_material_counts(self):
        realized = realize(takeda_preset("mono1", dim=3))
        grid = realized.grid
        assert grid.n_cells == 125
        names = grid.material_names
        counts = {
            n: int((grid.material_ids == i).sum()) for i, n in enumerate(names)
        }
        assert counts["core"] == 27
        assert counts["control_rod"] == 5
        assert counts["reflector"] == 93

    def test_boundary_kinds(self):
        realized = realize(takeda_preset("mono1", dim=3))
        bc = realized.grid.face_bc
        for a in range(3):
            assert bc[(a, 0)] == BCKind.NEUMANN
            assert bc[(a, 1)] == BCKind.ROBIN

    def test_source_placement(self):
        realized = realize(takeda_preset("mono1", dim=3))
        src = realized.source_fn(realized.grid)
        core = realized.grid.material_names.index("core")
        in_core = realized.grid.material_ids == core
        assert np.allclose(src[0, in_core], 9.09319e-3)
        assert np.allclose(src[1, in_core], 2.90183e-1)
        assert np.all(src[:, ~in_core] == 0.0)

    def test_source_follows_refinement(self):
        from spnfem.mesh import refine_slabs

        realized = realize(takeda_preset("mono1", dim=2))
        fine = refine_slabs(realized.grid, {0: [2], 1: [0, 4]})
        src = realized.source_fn(fine)
        assert src.shape == (2, fine.n_cells)
        core = fine.material_names.index("core")
        assert np.allclose(src[1, fine.material_ids == core], 2.90183e-1)


class TestMms:
    def test_exact_field_vanishes_on_boundary(self):
        _grid, _bundles, exact = mms_problem(dim=2, cells=4)
        edge = np.array([[0.0, 0.3], [1.0, 0.7], [0.5, 0.0], [0.5, 1.0]])
        assert np.allclose(exact.phi(edge), 0.0, atol=1e-15)

    def test_one_group_diffusion_source(self):
        # D = 1, sigma_a = 1, L = 1: S_f = (d pi^2 + 1) prod sin(pi x_i)
        mat = material_from_diffusion("mms", diffusion=[1.0], sigma_a=[1.0])
        for dim in (2, 3):
            _g, _b, exact = mms_problem(dim=dim, cells=2, material=mat)
            x = np.full((1, dim), 0.37)
            expect = (dim * np.pi**2 + 1.0) * np.sin(np.pi * 0.37) ** dim
            assert exact.source_at(x)[0, 0] == pytest.approx(expect, rel=1e-12)

    def test_source_cells_match_quadrature(self):
        grid, _bundles, exact = mms_problem(dim=2, cells=3)
        cells = exact.source_cells(grid)
        # cross-check one cell against brute-force quadrature
        k = 4
        lo = [grid.axes[a][grid.cell_multi[a][k]] for a in range(2)]
        w = grid.cell_widths[k]
        xs = np.linspace(lo[0], lo[0] + w[0], 201)
        ys = np.linspace(lo[1], lo[1] + w[1], 201)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        vals = exact.source_at(pts)[0].reshape(201, 201)
        mean = np.trapezoid(np.trapezoid(vals, ys, axis=1), xs) / (w[0] * w[1])
        assert cells[0, k] == pytest.approx(mean, rel=1e-4)


class TestCsv:
    def records(self):
        return [
            AmrIterationRecord(0, 125, 3.56, 1.28, 0.0595, 0.0687, 0.4, 100.0),
            AmrIterationRecord(1, 343, 1.89, 0.865, 0.0742, 0.153, 0.41, 102.0,
                               sub_eta_max=(1.0, np.nan)),
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "records.csv"
        export_csv(self.records(), str(path))
        back = read_csv_records(str(path))
        for a, b in zip(self.records(), back):
            assert a.iteration == b.iteration and a.n_cells == b.n_cells
            assert a.eta_max == b.eta_max
            assert a.eta_bc_ratio_max == b.eta_bc_ratio_max
        assert back[1].sub_eta_max[0] == 1.0
        assert np.isnan(back[1].sub_eta_max[1])

    def test_header_only_for_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        export_csv([], str(path))
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("iteration,n_cells,eta_max")


class TestVtk:
    def test_structure_3d(self, tmp_path):
        realized = realize(takeda_preset("mono1", dim=3))
        grid = realized.grid
        path = tmp_path / "mesh.vtk"
        export_vtk(
            str(path), grid,
            cell_data={"mat": grid.material_ids.astype(float)},
            point_data={"one": np.ones(grid.n_vertices)},
        )
        text = path.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        assert "DATASET RECTILINEAR_GRID" in text
        assert "DIMENSIONS 6 6 6" in text
        joined = "\n".join(text)
        assert "CELL_DATA 125" in joined
        assert "POINT_DATA 216" in joined
        # coordinate block sizes match the declared dimensions
        xline = next(l for l in text if l.startswith("X_COORDINATES"))
        assert xline.split()[1] == "6"

    def test_structure_2d(self, tmp_path):
        realized = realize(takeda_preset("mono1", dim=2))
        path = tmp_path / "mesh2d.vtk"
        export_vtk(str(path), realized.grid,
                   cell_data={"x": np.arange(25.0)})
        joined = path.read_text()
        assert "DIMENSIONS 6 6 1" in joined
        assert "CELL_DATA 25" in joined
        # VTK cell ordering is x-fastest: the first row is x = 0..4 at y = 0
        data = joined.split("LOOKUP_TABLE default\n")[1].splitlines()[:5]
        # our C-order has axis 0 (x) slowest: cells (0..4, y=0) are 0,5,10,15,20
        assert [float(v) for v in data] == [0.0, 5.0, 10.0, 15.0, 20.0]

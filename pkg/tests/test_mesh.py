import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aniso_uq.errors import ClassificationError, StructureError
from aniso_uq.fem import FEFunction
from aniso_uq.mesh import (
    BoundaryTag,
    build_cube_mesh,
    classify_boundary_face,
    kuhn_grid,
    prolong,
    prolong_values,
    refine,
)


class TestCubeMesh:
    @pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
    def test_counts_and_volume(self, level):
        mesh = build_cube_mesh(level)
        assert mesh.n_tets == 48 * 8**level
        assert mesh.n_vertices == (2 ** (level + 1) + 1) ** 3
        assert abs(mesh.volumes.sum() - 1.0) <= 1e-12

    def test_level0(self):
        mesh = build_cube_mesh(0)
        assert mesh.n_tets == 48
        assert mesh.n_vertices == 27

    @pytest.mark.parametrize("level", [0, 1, 2, 3])
    def test_boundary_areas(self, level):
        areas = build_cube_mesh(level).area_by_tag()
        np.testing.assert_allclose(
            [areas[BoundaryTag.Gamma0], areas[BoundaryTag.Gamma1], areas[BoundaryTag.Gamma2]], [1, 1, 4], atol=1e-12
        )

    def test_positive_orientation(self):
        mesh = build_cube_mesh(2)
        p = mesh.vertices[mesh.tets]
        det = np.linalg.det(p[:, 1:] - p[:, :1])
        assert np.all(det > 0)

    def test_conforming(self):
        # every interior face is shared by exactly two tets, boundary faces by one
        mesh = build_cube_mesh(1)
        faces = np.sort(mesh.tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3), axis=1)
        _, counts = np.unique(faces, axis=0, return_counts=True)
        assert set(counts) == {1, 2}
        assert np.sum(counts == 1) == len(mesh.boundary_faces)

    def test_immutable(self):
        mesh = build_cube_mesh(0)
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 5.0

    def test_negative_level(self):
        with pytest.raises(ValueError):
            build_cube_mesh(-1)

    @pytest.mark.parametrize("level", [0, 1, 2])
    def test_refined_equals_kuhn_grid(self, level):
        # the red-refined mesh consists of the Kuhn tets of the finer grid
        mesh = build_cube_mesh(level)
        vertices, tets = kuhn_grid(2 ** (level + 1))
        key = lambda v, t: {tuple(sorted(map(tuple, np.round(v[tt], 12)))) for tt in t}
        assert key(mesh.vertices, mesh.tets) == key(vertices, tets)


class TestRefine:
    def test_one_step(self):
        coarse = build_cube_mesh(0)
        fine = refine(coarse)
        assert fine.n_tets == 384
        assert abs(fine.volumes.sum() - 1.0) < 1e-14

    def test_two_steps(self):
        assert refine(refine(build_cube_mesh(0))).n_tets == 48 * 64

    def test_parent_vertices_coincide(self):
        coarse = build_cube_mesh(1)
        fine = refine(coarse)
        np.testing.assert_array_equal(fine.vertices[: coarse.n_vertices], coarse.vertices)

    def test_children_inside_parent(self):
        coarse = build_cube_mesh(0)
        fine = build_cube_mesh(1)
        # children are stored parent-major, eight per parent
        np.testing.assert_allclose(fine.volumes.reshape(-1, 8).sum(axis=1), coarse.volumes, rtol=1e-13)
        lo = coarse.vertices[coarse.tets].min(axis=1)
        hi = coarse.vertices[coarse.tets].max(axis=1)
        c = fine.centroids.reshape(-1, 8, 3)
        assert np.all((c >= lo[:, None] - 1e-15) & (c <= hi[:, None] + 1e-15))

    def test_ancestor(self):
        fine = build_cube_mesh(2)
        assert fine.ancestor(0) is build_cube_mesh(0)
        with pytest.raises(StructureError):
            build_cube_mesh(0).ancestor(1)


class TestClassify:
    def test_examples(self):
        assert classify_boundary_face((1, 0.3, 0.7)) == BoundaryTag.Gamma0
        assert classify_boundary_face((0, 0.5, 0.5)) == BoundaryTag.Gamma1
        assert classify_boundary_face((0.5, 0.5, 0)) == BoundaryTag.Gamma2

    @pytest.mark.parametrize("point", [(0.5, 0.5, 0.5), (1.5, 0.5, 0.0), (0.2, 0.3, 0.4)])
    def test_off_boundary(self, point):
        with pytest.raises(ClassificationError):
            classify_boundary_face(point)

    def test_every_face_tagged_once(self):
        mesh = build_cube_mesh(1)
        assert len(mesh.boundary_tags) == len(mesh.boundary_faces)
        assert set(np.unique(mesh.boundary_tags)) == {0, 1, 2}


class TestProlong:
    def test_linear_reproduced(self):
        coarse, fine = build_cube_mesh(0), build_cube_mesh(3)
        u = FEFunction.interpolate(coarse, lambda x: x[:, 0])
        np.testing.assert_allclose(prolong(u, fine).values, fine.vertices[:, 0], atol=1e-15)

    def test_constant(self):
        coarse, fine = build_cube_mesh(1), build_cube_mesh(2)
        u = FEFunction(coarse, np.ones(coarse.n_vertices))
        np.testing.assert_array_equal(prolong(u, fine).values, 1.0)

    def test_restriction_identity(self):
        coarse, fine = build_cube_mesh(0), build_cube_mesh(2)
        v = np.random.default_rng(0).standard_normal(coarse.n_vertices)
        np.testing.assert_array_equal(prolong_values(v, coarse, fine)[: coarse.n_vertices], v)

    def test_same_mesh(self):
        mesh = build_cube_mesh(1)
        v = np.arange(mesh.n_vertices, dtype=float)
        np.testing.assert_array_equal(prolong_values(v, mesh, mesh), v)

    def test_not_nested(self):
        with pytest.raises(StructureError):
            prolong_values(np.zeros(125), build_cube_mesh(1), build_cube_mesh(0))

    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(st.floats(-10, 10), min_size=4, max_size=4),
        st.floats(-5, 5),
    )
    def test_linear_and_affine_exact(self, coef, scale):
        coarse, fine = build_cube_mesh(0), build_cube_mesh(2)
        f = lambda x: coef[0] + x @ np.asarray(coef[1:])
        rng = np.random.default_rng(1)
        v1, v2 = rng.standard_normal((2, coarse.n_vertices))
        lhs = prolong_values(v1 + scale * v2, coarse, fine)
        rhs = prolong_values(v1, coarse, fine) + scale * prolong_values(v2, coarse, fine)
        np.testing.assert_allclose(lhs, rhs, atol=1e-11)
        np.testing.assert_allclose(prolong_values(f(coarse.vertices), coarse, fine), f(fine.vertices), atol=1e-12)

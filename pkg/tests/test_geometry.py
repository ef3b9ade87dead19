"""Domain classification, projections, cap identities, flattening transform."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oblique_visc.geometry import (
    CapSpec,
    ObliqueField,
    PolyGraph,
    beta_projection,
    check_obliqueness,
    flatten_transform,
    make_box_domain,
    make_graph_domain,
    make_half_disk,
    make_spherical_cap,
    one_direction_constant,
    sdf_gradient_norm,
    unflatten_transform,
    validate_cap_height,
)


class TestHalfDisk:
    def test_classification_examples(self):
        dom = make_half_disk(1.0)
        assert dom.signed_distance(np.array([0.0, 0.5])) < 0  # interior
        pt = np.array([0.3, 0.0])
        assert dom.oblique_patch(pt)
        top = np.array([0.0, 1.0])
        assert not dom.oblique_patch(top)
        np.testing.assert_allclose(dom.inner_normal(top), [0.0, -1.0], atol=1e-12)

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(ValueError):
            make_half_disk(0.0)

    def test_patch_partition_on_samples(self):
        dom = make_half_disk(1.0)
        pts = dom.sample_boundary(10_000, rng=np.random.default_rng(0))
        on_gamma = dom.oblique_patch(pts)
        on_dir = dom.dirichlet_patch(pts)
        assert np.all(on_gamma ^ on_dir)

    def test_oblique_patch_relatively_open(self):
        dom = make_half_disk(1.0)
        rng = np.random.default_rng(1)
        xs = rng.uniform(-0.9, 0.9, 200)
        for x in xs:
            # a small boundary neighborhood of an interior patch point stays oblique
            for dx in (-1e-6, 1e-6):
                assert dom.oblique_patch(np.array([x + dx, 0.0]))

    def test_sdf_gradient_unit_length(self):
        dom = make_half_disk(1.0)
        pts = dom.sample_boundary(200, rng=np.random.default_rng(2))
        # avoid the two corner points where the distance function has a kink
        keep = np.linalg.norm(pts - np.array([1, 0]), axis=1) > 1e-2
        keep &= np.linalg.norm(pts - np.array([-1, 0]), axis=1) > 1e-2
        norms = sdf_gradient_norm(dom, pts[keep])
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_projection_idempotent_on_boundary(self):
        dom = make_half_disk(1.0)
        pts = dom.sample_boundary(500, rng=np.random.default_rng(3))
        proj = dom.project_to_boundary(pts)
        np.testing.assert_allclose(proj, pts, atol=1e-12)


class TestCap:
    def test_half_disk_limit(self):
        spec = CapSpec(1.0, 1.0)
        assert spec.big_radius == pytest.approx(1.0)

    def test_big_radius_closed_form(self):
        spec = CapSpec(1.0, 0.5)
        assert spec.big_radius == pytest.approx(1.25)

    def test_apex_is_dirichlet(self):
        dom = make_spherical_cap(CapSpec(1.0, 0.5))
        apex = np.array([0.0, 0.5])
        assert abs(dom.signed_distance(apex)) < 1e-12
        assert not dom.oblique_patch(apex)

    @given(
        st.floats(0.1, 4.0),
        st.floats(0.01, 1.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_cap_radius_identity(self, r, frac):
        h = frac * r
        R = CapSpec(r, h).big_radius
        assert abs((R - h) ** 2 + r**2 - R**2) <= 1e-12 * max(1.0, R**2)

    def test_invalid_heights_rejected(self):
        with pytest.raises(ValueError):
            CapSpec(1.0, 1.5)
        with pytest.raises(ValueError):
            CapSpec(1.0, 0.0)

    def test_inward_ray_condition_vertical_beta(self):
        dom = make_spherical_cap(CapSpec(1.0, 0.25))
        ob = ObliqueField.constant(beta=(0.0, 1.0), delta0=0.5)
        worst = validate_cap_height(dom, ob)
        assert worst < 0

    def test_inward_ray_condition_fails_for_tall_tilted(self):
        dom = make_spherical_cap(CapSpec(1.0, 1.0))
        b = np.array([0.6, 0.8])
        ob = ObliqueField.constant(beta=tuple(b), delta0=0.5)
        with pytest.raises(ValueError):
            validate_cap_height(dom, ob)


class TestBetaProjection:
    def test_vertical(self):
        assert beta_projection(np.array([0.3, 0.5]), (0.0, 1.0)) == pytest.approx(0.3)

    def test_diagonal(self):
        b = np.array([1.0, 1.0]) / np.sqrt(2)
        assert beta_projection(np.array([0.0, 0.2]), b) == pytest.approx(-0.2)

    def test_boundary_points_fixed(self):
        pts = np.stack([np.linspace(-1, 1, 17), np.zeros(17)], axis=1)
        out = beta_projection(pts, (0.3, 0.9))
        np.testing.assert_allclose(out[:, 0], pts[:, 0], atol=1e-15)

    def test_beta_n_zero_rejected(self):
        with pytest.raises(ValueError):
            beta_projection(np.array([0.1, 0.2]), (1.0, 0.0))

    @given(
        st.floats(-2.0, 2.0), st.floats(-2.0, 2.0),
        st.floats(-1.0, 1.0), st.floats(0.1, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_displacement_identity(self, x1, x2, b1, b2):
        x = np.array([x1, x2])
        b = np.array([b1, b2])
        xp = beta_projection(x, b)
        lhs = np.linalg.norm(x - np.array([xp, 0.0]))
        rhs = np.linalg.norm(b) / abs(b2) * abs(x2)
        assert abs(lhs - rhs) <= 1e-12 * (1 + rhs)


class TestFlatten:
    def test_identity_for_zero_graph(self):
        phi = PolyGraph((0.0,), 1.0)
        x = np.array([0.3, 0.7])
        np.testing.assert_allclose(flatten_transform(phi, x), x, atol=0)

    def test_graph_maps_to_flat(self):
        phi = PolyGraph((0.0, 0.0, 1.0), 1.0)  # x1^2
        y = flatten_transform(phi, np.array([0.5, 0.25]))
        np.testing.assert_allclose(y, [0.5, 0.0], atol=1e-15)

    def test_round_trip(self):
        phi = PolyGraph((0.1, -0.2, 0.3), 1.0)
        rng = np.random.default_rng(4)
        pts = np.stack([rng.uniform(-1, 1, 300), rng.uniform(-1, 1, 300)], axis=1)
        back = unflatten_transform(phi, flatten_transform(phi, pts))
        assert np.max(np.abs(back - pts)) <= 1e-14

    def test_vertical_sign_preserved(self):
        phi = PolyGraph((0.0, 0.5, -0.4), 1.0)
        rng = np.random.default_rng(5)
        pts = np.stack([rng.uniform(-1, 1, 300), rng.uniform(-2, 2, 300)], axis=1)
        above = pts[:, 1] > phi(pts[:, 0])
        mapped = flatten_transform(phi, pts)
        np.testing.assert_array_equal(mapped[:, 1] > 0, above)

    def test_outside_chart_rejected(self):
        phi = PolyGraph((0.0, 1.0), 0.5)
        with pytest.raises(ValueError):
            flatten_transform(phi, np.array([0.7, 0.0]))


class TestGraphDomain:
    def test_patches_and_normal(self):
        phi = PolyGraph((0.0, 0.0, 0.25), 1.0)
        dom = make_graph_domain(phi, 0.8)
        pt = np.array([0.4, phi(0.4)])
        assert dom.oblique_patch(pt)
        n = dom.inner_normal(pt)
        slope = phi.derivative(0.4)
        expect = np.array([-slope, 1.0]) / np.hypot(slope, 1.0)
        np.testing.assert_allclose(n, expect, atol=1e-12)
        assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)

    def test_sdf_gradient_unit_on_graph(self):
        phi = PolyGraph((0.05, -0.1, 0.2), 1.0)
        dom = make_graph_domain(phi, 0.5)
        xs = np.linspace(-0.9, 0.9, 41)
        pts = np.stack([xs, phi(xs)], axis=1)
        norms = sdf_gradient_norm(dom, pts)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)


class TestObliqueField:
    def test_transversality_checked(self):
        dom = make_half_disk(1.0)
        ob = ObliqueField.constant(beta=(0.0, 1.0), delta0=1.0)
        worst = check_obliqueness(dom, ob, rng=np.random.default_rng(0))
        assert worst == pytest.approx(1.0)

    def test_tangential_beta_rejected(self):
        dom = make_half_disk(1.0)
        ob = ObliqueField.constant(beta=(1.0, 0.0), delta0=0.5)
        with pytest.raises(ValueError, match="beta.n"):
            check_obliqueness(dom, ob, rng=np.random.default_rng(0))

    def test_beta_norm_capped(self):
        with pytest.raises(ValueError):
            ObliqueField.constant(beta=(1.0, 1.0))

    def test_one_direction_constant_constant_field(self):
        b = np.tile(np.array([0.6, 0.8]), (50, 1))
        assert one_direction_constant(b) == pytest.approx(1.0, abs=1e-6)

    def test_one_direction_constant_spread_field(self):
        # two directions 90 degrees apart: best xi bisects, delta1 = cos(45)
        b = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert one_direction_constant(b) == pytest.approx(np.sqrt(0.5), abs=1e-6)


class TestBoxDomain:
    def test_patches(self):
        dom = make_box_domain(1.0, 0.5)
        assert dom.oblique_patch(np.array([0.3, 0.0]))
        assert not dom.oblique_patch(np.array([0.3, 0.5]))
        assert not dom.oblique_patch(np.array([1.0, 0.2]))
        np.testing.assert_allclose(
            dom.inner_normal(np.array([0.2, 0.5])), [0.0, -1.0], atol=1e-12
        )

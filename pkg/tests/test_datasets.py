import numpy as np
import pytest

from pmflow import datasets as ds


def fd_jacobian_vardim(z1, z2, h=1e-6):
    cols = []
    for dz in (np.array([h, 0.0]), np.array([0.0, h])):
        plus = ds.vardim_map(z1 + dz[0], z2 + dz[1])
        minus = ds.vardim_map(z1 - dz[0], z2 - dz[1])
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=2)  # (n, 3, 2): columns are d f / d z_i


class TestGen2d:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            ds.gen_2d("nope", 10, 0)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            ds.gen_2d("moons", 0, 0)

    def test_determinism(self):
        a = ds.gen_2d("pinwheel", 500, 7).points
        b = ds.gen_2d("pinwheel", 500, 7).points
        assert np.array_equal(a, b)

    def test_grid_bounding_box(self):
        pts = ds.gen_2d("grid", 2000, 1).points
        assert np.all(np.abs(pts) <= 2.0 + 3 * 0.05 + 0.15)

    def test_circles_two_radii_modes(self):
        pts = ds.gen_2d("circles", 4000, 2).points
        r = np.linalg.norm(pts, axis=1)
        near_inner = np.mean(np.abs(r - 0.5) < 0.08)
        near_outer = np.mean(np.abs(r - 1.0) < 0.08)
        assert near_inner > 0.4 and near_outer > 0.4
        assert near_inner + near_outer > 0.95

    @pytest.mark.parametrize("name", ds.GEN_2D_NAMES)
    def test_all_generators_finite_o1_scale(self, name):
        pts = ds.gen_2d(name, 1000, 3).points
        assert pts.shape == (1000, 2)
        assert np.all(np.isfinite(pts))
        assert np.max(np.abs(pts)) < 10.0


class TestVardim3d:
    def test_rank1_region_collapses(self):
        d = ds.gen_vardim_3d(5000, 0)
        z1 = d.clean[:, 0]
        inner = np.abs(z1) < 1.0
        assert np.max(np.abs(d.clean[inner, 1])) == 0.0

    def test_third_coordinate_is_sine(self):
        d = ds.gen_vardim_3d(1000, 1)
        np.testing.assert_allclose(d.clean[:, 2], np.sin(d.clean[:, 0]), atol=1e-12)

    def test_rank1_fraction_matches_mixture_probability(self):
        from scipy.stats import norm

        n = 40_000
        d = ds.gen_vardim_3d(n, 2)
        frac = np.mean(d.true_rank == 1)
        p = np.mean(
            [norm.cdf(1, m, 0.3) - norm.cdf(-1, m, 0.3) for m in (-2.0, 0.0, 2.0)]
        )
        assert abs(frac - p) < 3 * np.sqrt(p * (1 - p) / n)

    def test_noise_level(self):
        d = ds.gen_vardim_3d(20_000, 3, noise_sigma=0.01)
        resid = d.points - d.clean
        assert abs(resid.std() - 0.01) < 0.001


class TestTrueLogpdf:
    def test_rank1_formula(self):
        x = ds.vardim_map(np.array([0.5]), np.array([1.3]))[0]
        lp, rank = ds.true_logpdf_vardim(x)
        assert rank == 1
        expect = ds._mix_logpdf(np.array([0.5]))[0] - 0.5 * np.log(1 + np.cos(0.5) ** 2)
        assert lp == pytest.approx(expect, abs=1e-12)

    def test_rank2_matches_fd_jacobian(self):
        z1, z2 = 2.0, 0.0
        x = ds.vardim_map(np.array([z1]), np.array([z2]))[0]
        lp, rank = ds.true_logpdf_vardim(x)
        assert rank == 2
        J = fd_jacobian_vardim(np.array([z1]), np.array([z2]))[0]
        det = np.linalg.det(J.T @ J)
        expect = (
            ds._mix_logpdf(np.array([z1]))[0]
            - 0.5 * z2**2
            - 0.5 * np.log(2 * np.pi)
            - 0.5 * np.log(det)
        )
        assert lp == pytest.approx(expect, rel=1e-6)

    def test_symmetry_in_z2(self):
        for z1 in (1.5, -2.2):
            a = ds.true_logpdf_vardim(ds.vardim_map(np.array([z1]), np.array([0.7]))[0])[0]
            b = ds.true_logpdf_vardim(ds.vardim_map(np.array([z1]), np.array([-0.7]))[0])[0]
            assert a == pytest.approx(b, abs=1e-12)

    def test_off_manifold_rejected(self):
        with pytest.raises(ValueError):
            ds.true_logpdf_vardim(np.array([0.5, 0.0, 0.9]))
        with pytest.raises(ValueError):
            ds.true_logpdf_vardim(np.array([0.5, 0.2, np.sin(0.5)]))

    def test_normalization_via_importance_estimate(self):
        """With the generator as proposal, density x stretch / proposal == 1
        pointwise, so the integral over the manifold is exactly recovered."""
        d = ds.gen_vardim_3d(20_000, 5)
        lp, rank = ds.true_logpdf_vardim(d.clean)
        z1 = d.clean[:, 0]
        z2 = np.where(rank == 2, d.clean[:, 1] / (1 - 1 / np.abs(z1)), 0.0)
        log_q = ds._mix_logpdf(z1) + np.where(
            rank == 2, -0.5 * z2**2 - 0.5 * np.log(2 * np.pi), 0.0
        )
        stretch = np.empty(len(z1))
        for i in range(len(z1)):
            J = fd_jacobian_vardim(np.array([z1[i]]), np.array([z2[i]]))[0]
            if rank[i] == 1:
                stretch[i] = 0.5 * np.log(J[:, 0] @ J[:, 0])
            else:
                stretch[i] = 0.5 * np.linalg.slogdet(J.T @ J)[1]
        weights = np.exp(lp + stretch - log_q)
        assert abs(weights.mean() - 1.0) < 0.01


class TestIO:
    def test_roundtrip_bit_exact(self, tmp_path):
        d = ds.gen_vardim_3d(1000, 4)
        path = str(tmp_path / "v.csv")
        ds.write_csv(d.clean_view(), path)
        back = ds.read_csv(path)
        assert np.array_equal(back.points, d.clean)
        assert np.array_equal(back.true_logpdf, d.true_logpdf)
        assert np.array_equal(back.true_rank, d.true_rank)

    def test_split_sizes(self, tmp_path):
        d = ds.gen_2d("moons", 1000, 5)
        tr, te = ds.split_and_write(d, 0.7, str(tmp_path / "m"))
        assert ds.read_csv(tr).n == 700
        assert ds.read_csv(te).n == 300

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ds.read_csv(str(tmp_path / "absent.csv"))

    def test_manifest_contents(self, tmp_path):
        import json

        d = ds.gen_vardim_3d(100, 6, noise_sigma=0.02)
        ds.split_and_write(d, 0.5, str(tmp_path / "v"))
        manifest = json.loads((tmp_path / "v_manifest.json").read_text())
        assert manifest["name"] == "vardim3d"
        assert manifest["noise_sigma"] == 0.02
        assert manifest["columns"][:3] == ["x1", "x2", "x3"]

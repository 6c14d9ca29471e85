import numpy as np
import pytest

from koopsyn import bounds


@pytest.fixture(scope="module")
def req_grid(plant_cooked, lifting_cooked):
    return bounds.compute_d0(plant_cooked, lifting_cooked, 0.1, 0.05)


class TestComputeD0:
    def test_reported_magnitude(self, req_grid):
        assert 6.9e16 <= req_grid.d0_float <= 6.9e18

    def test_delta_halving_doubles(self, plant_cooked, lifting_cooked, req_grid):
        half = bounds.compute_d0(plant_cooked, lifting_cooked, 0.1, 0.025)
        assert half.d0_float >= 2.0 * req_grid.d0_float * (1 - 1e-12)

    def test_monotone_in_cr_and_delta(self, plant_cooked, lifting_cooked):
        crs = (0.05, 0.1, 0.2)
        deltas = (0.02, 0.05, 0.1)
        vals = {(c, d): bounds.compute_d0(plant_cooked, lifting_cooked, c, d,
                                          bounds.QuadratureSpec(points_per_axis=31)
                                          ).d0_float
                for c in crs for d in deltas}
        for d in deltas:
            for lo, hi in zip(crs, crs[1:]):
                assert vals[(lo, d)] >= vals[(hi, d)]
        for c in crs:
            for lo, hi in zip(deltas, deltas[1:]):
                assert vals[(c, lo)] >= vals[(c, hi)]

    def test_gram_matrix_positive_definite(self, req_grid):
        eigs = np.linalg.eigvalsh(req_grid.C)
        assert eigs[0] > 0.0
        assert np.allclose(req_grid.C, req_grid.C.T)

    def test_quadrature_grid_convergence(self, plant_cooked, lifting_cooked):
        a = bounds.compute_d0(plant_cooked, lifting_cooked, 0.1, 0.05,
                              bounds.QuadratureSpec(points_per_axis=101))
        b = bounds.compute_d0(plant_cooked, lifting_cooked, 0.1, 0.05,
                              bounds.QuadratureSpec(points_per_axis=202))
        assert abs(a.sigma_C_fro - b.sigma_C_fro) < 0.01 * b.sigma_C_fro
        for k in range(2):
            assert (abs(a.sigma_A_fro[k] - b.sigma_A_fro[k])
                    < 0.01 * b.sigma_A_fro[k])

    def test_mc_matches_grid(self, plant_cooked, lifting_cooked, req_grid):
        mc = bounds.compute_d0(plant_cooked, lifting_cooked, 0.1, 0.05,
                               bounds.QuadratureSpec(method="mc"))
        assert abs(mc.d0_float - req_grid.d0_float) <= 0.05 * req_grid.d0_float
        assert mc.mc_stderr is not None

    def test_report_json(self, req_grid):
        import json

        doc = json.loads(req_grid.to_json())
        assert doc["d0"] >= 1
        assert doc["log10_d0"] == pytest.approx(np.log10(req_grid.d0_float))
        assert len(doc["per_k"]) == 2
        assert doc["quadrature"]["method"] == "grid"

    def test_invalid_inputs(self, plant_cooked, lifting_cooked):
        with pytest.raises(ValueError):
            bounds.compute_d0(plant_cooked, lifting_cooked, -1.0, 0.05)
        with pytest.raises(ValueError):
            bounds.compute_d0(plant_cooked, lifting_cooked, 0.1, 1.5)

    def test_nonfinite_integrand_reported(self, plant_cooked):
        from koopsyn.lifting import custom, make_lifting

        # pole at x1 = 0.125, which is a midpoint-grid node for 8 points/axis
        spiky = make_lifting(2, [custom(lambda x: float(x[0] / (x[0] - 0.125)))])
        with np.errstate(divide="ignore", invalid="ignore"):
            with pytest.raises(ValueError):
                bounds.compute_d0(plant_cooked, spiky, 0.1, 0.05,
                                  bounds.QuadratureSpec(points_per_axis=8))


class TestRemainderBound:
    def test_zero(self, surrogate_exact):
        assert bounds.remainder_bound(surrogate_exact, np.zeros(3), 0.0) == 0.0

    def test_formula(self, surrogate_exact):
        z = np.array([2.0, 0.0, 0.0])
        assert bounds.remainder_bound(surrogate_exact, z, 1.0) == pytest.approx(0.3)

    def test_homogeneous(self, surrogate_exact):
        rng = np.random.default_rng(1)
        z = rng.normal(size=3)
        u = rng.normal(size=1)
        base = bounds.remainder_bound(surrogate_exact, z, u)
        for t in (0.5, 2.0, 7.5):
            assert bounds.remainder_bound(surrogate_exact, t * z, t * u) == \
                pytest.approx(t * base, rel=1e-12)

import numpy as np
import pytest

from crisscross.cca2d import CCAttentionParams, rcca_backward, rcca_forward
from crisscross.gradcheck import check_attention, default_suite, rel_err
from crisscross.tensor_core import ProjectionWeights


class TestRelErr:
    def test_exact_match(self):
        assert rel_err(1.0, 1.0) == 0.0

    def test_small_values_compared_absolutely(self):
        assert rel_err(1e-9, 0.0) == pytest.approx(1e-9)


class TestAttentionChecks:
    @pytest.mark.parametrize("shape,loops", [((3, 4), 1), ((3, 3), 2),
                                             ((3, 3), 3)])
    def test_2d_within_tolerance(self, shape, loops):
        res = check_attention(0, shape, channels=4, reduced=2, loops=loops)
        assert res.max_rel_err < 1e-5, res.worst_coordinate

    @pytest.mark.parametrize("loops", [1, 2])
    def test_3d_within_tolerance(self, loops):
        res = check_attention(0, (2, 2, 3), channels=3, reduced=1, loops=loops)
        assert res.max_rel_err < 1e-5, res.worst_coordinate

    def test_zero_value_projection_reduces_to_identity(self):
        # with wv = 0 the aggregation vanishes and only the residual remains,
        # so the map is the identity; the analytic backward must agree with
        # finite differences and return d_out unchanged
        rng = np.random.default_rng(21)
        base = CCAttentionParams.random(4, 2, rng)
        p = CCAttentionParams(wq=base.wq, wk=base.wk,
                              wv=ProjectionWeights(np.zeros((4, 4))))
        x = rng.normal(size=(4, 3, 3))

        def loss():
            out, _ = rcca_forward(x, p, 2)
            return float((out ** 2).sum())

        out, cache = rcca_forward(x, p, 2)
        d_x, _ = rcca_backward(cache, 2.0 * out)
        step = 1e-6
        worst = 0.0
        flat = x.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss()
            flat[j] = orig - step
            down = loss()
            flat[j] = orig
            fd = (up - down) / (2 * step)
            worst = max(worst, rel_err(float(d_x.ravel()[j]), fd))
        assert worst < 1e-5
        # zero values kill the gradient through the attention weights too,
        # leaving exactly the residual path
        assert np.abs(d_x - 2.0 * out).max() == 0.0


class TestDefaultSuite:
    def test_scales_with_seeds(self):
        assert len(default_suite(seeds=1)) * 2 == len(default_suite(seeds=2))

    def test_one_seed_suite_passes(self):
        for res in default_suite(seeds=1):
            assert res.passed(), f"{res.name}: {res.max_rel_err}"

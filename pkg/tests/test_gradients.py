import pytest

from adaf.gradcheck import FRONTEND_CHECKS, PRIMITIVE_CHECKS


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CHECKS))
def test_primitive_matches_finite_differences(name):
    err = max(PRIMITIVE_CHECKS[name](seed) for seed in range(5))
    assert err < 1e-6, f"{name}: max rel error {err:.3e}"


@pytest.mark.parametrize("name", sorted(FRONTEND_CHECKS))
def test_frontend_matches_finite_differences(name):
    err = max(FRONTEND_CHECKS[name](seed) for seed in range(5))
    assert err < 1e-4, f"{name}: max rel error {err:.3e}"

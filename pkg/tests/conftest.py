import numpy as np
import pytest

from contdid import CrossSection, Dataset, KernelSpec, LinearSystem


@pytest.fixture
def linear_dgp():
    """Endogenous linear system with a scale change in the treatment."""
    return LinearSystem(alpha=(1.0, 0.0), beta=2.0, gamma=(0.0, 1.0), delta=(2.0, 1.0), rho=0.5)


@pytest.fixture
def duplicated_dataset():
    """One sample duplicated as both periods; no ties."""
    rng = np.random.default_rng(42)
    x = rng.normal(1.0, 1.0, 2000)
    y = 2.0 * x + rng.normal(0.0, 0.5, 2000)
    return Dataset.from_cross_sections(
        [CrossSection(1, y, x), CrossSection(2, y.copy(), x.copy())]
    )


@pytest.fixture
def kernel_spec():
    return KernelSpec()

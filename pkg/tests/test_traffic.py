from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import linalg, stats

from mmwave_relq.config import TrafficSpec
from mmwave_relq.errors import FitInfeasibleError, StructuralError
from mmwave_relq.simulation import sample_map_interarrivals
from mmwave_relq.traffic import (
    MapProcess,
    SppParams,
    arrival_rate,
    embedded_distribution,
    fit_spp,
    fit_spp_search,
    interarrival_moment,
    lag_autocovariance,
    resolve_cov_amplitude,
    scv,
    spp_h2,
    spp_moments,
    stationary_distribution,
    traffic_from_spec,
)


def random_map(rng: np.random.Generator, m: int = 4) -> MapProcess:
    l0 = rng.uniform(0.1, 1.0, (m, m))
    l1 = rng.uniform(0.0, 1.0, (m, m))
    np.fill_diagonal(l0, 0.0)
    np.fill_diagonal(l0, -(l0.sum(axis=1) + l1.sum(axis=1)))
    return MapProcess(lambda0=l0, lambda1=l1)


def random_spp(rng: np.random.Generator) -> SppParams:
    return SppParams(*rng.uniform(0.05, 5.0, 4))


@pytest.mark.parametrize(
    "l0, l1, message",
    [
        ([[-1.0]], [[0.0]], "never generates"),
        ([[-1.0, 0.5], [0.5, -1.0]], [[0.5, 0.0], [0.0, 0.4]], "sum to zero"),
        ([[-1.0, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, 1.0]], "reducible"),
        ([[-1.0, -0.5], [0.5, -1.5]], [[1.5, 0.0], [0.0, 1.0]], "off-diagonal"),
        ([[-1.0, 0.5]], [[0.5, 0.0]], "square"),
    ],
)
def test_invalid_maps_are_rejected(l0, l1, message):
    with pytest.raises(StructuralError, match=message):
        MapProcess(lambda0=np.array(l0), lambda1=np.array(l1))


def test_spp_stationary_distribution():
    symmetric = SppParams(0.1, 0.5, 0.3, 0.3).as_map()
    assert stationary_distribution(symmetric) == pytest.approx([0.5, 0.5], abs=1e-15)
    spp = SppParams(0.1, 0.5, 0.2, 0.7)
    assert stationary_distribution(spp.as_map()) == pytest.approx([0.7 / 0.9, 0.2 / 0.9], abs=1e-14)


def test_stationary_distribution_matches_null_space():
    rng = np.random.default_rng(11)
    for _ in range(5):
        process = random_map(rng)
        oracle = linalg.null_space(process.generator.T)[:, 0]
        oracle /= oracle.sum()
        theta = stationary_distribution(process)
        assert theta == pytest.approx(oracle, abs=1e-10)
        assert np.abs(theta @ process.generator).max() <= 1e-12


def test_arrival_rate_examples():
    assert arrival_rate(MapProcess.poisson(0.3)) == pytest.approx(0.3)
    assert arrival_rate(SppParams(0.2, 0.2, 1.0, 3.0).as_map()) == pytest.approx(0.2)
    assert arrival_rate(SppParams(0.05, 0.5, 0.01, 0.01).as_map()) == pytest.approx(0.275)


def test_embedded_distribution_closed_form_and_fixed_point():
    spp = SppParams(0.3, 2.0, 0.4, 0.9)
    w = spp.lambda1 * spp.r2 + spp.lambda2 * spp.r1
    expected = [spp.lambda1 * spp.r2 / w, spp.lambda2 * spp.r1 / w]
    assert embedded_distribution(spp.as_map()) == pytest.approx(expected, abs=1e-12)
    assert embedded_distribution(MapProcess.poisson(1.0)).tolist() == [1.0]

    process = random_map(np.random.default_rng(5))
    p = np.linalg.solve(-process.lambda0, process.lambda1)
    iterate = np.full(process.phases, 1.0 / process.phases)
    for _ in range(2000):
        iterate = iterate @ p
    assert embedded_distribution(process) == pytest.approx(iterate, abs=1e-10)


def test_h2_collapses_to_exponential_for_equal_rates():
    h2 = spp_h2(SppParams(0.7, 0.7, 0.2, 1.3))
    assert h2.u1 == pytest.approx(0.7)
    assert h2.q == pytest.approx(1.0)
    x = np.linspace(0.0, 20.0, 201)
    assert h2.cdf(x) == pytest.approx(1.0 - np.exp(-0.7 * x), abs=1e-12)


def test_h2_is_a_valid_cdf():
    rng = np.random.default_rng(2)
    x = np.linspace(0.0, 50.0, 501)
    for _ in range(20):
        spp = random_spp(rng)
        h2 = spp_h2(spp)
        values = h2.cdf(x)
        assert values[0] == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.diff(values) >= -1e-15)
        assert h2.u1 <= h2.u2
        stats_ = spp_moments(spp)
        assert h2.mean == pytest.approx(stats_.mean_interarrival, rel=1e-10)
        process = spp.as_map()
        assert interarrival_moment(process, 1) == pytest.approx(h2.mean, rel=1e-10)
        assert interarrival_moment(process, 2) == pytest.approx(h2.second_moment, rel=1e-9)


def test_spp_moments_example():
    st = spp_moments(SppParams(1.0, 3.0, 1.0, 1.0))
    assert st.mean_interarrival == pytest.approx(0.5)
    assert st.cov_amplitude == pytest.approx(1.0 / 28.0)
    assert st.lag1_nacf == pytest.approx(3.0 / 7.0)
    assert st.lag1_autocovariance == pytest.approx(3.0 / 196.0)
    assert st.arrival_rate * st.mean_interarrival == pytest.approx(1.0, abs=1e-12)


def test_spp_moments_of_poisson_like_process():
    st = spp_moments(SppParams(0.4, 0.4, 0.1, 0.2))
    assert st.cov_amplitude == 0.0
    assert st.cov_canonical == pytest.approx(1.0, abs=1e-10)
    assert scv(SppParams(0.4, 0.4, 0.1, 0.2).as_map()) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("lag", [1, 2, 3])
def test_lag_autocovariance_decays_geometrically(lag):
    spp = SppParams(0.05, 0.5, 0.01, 0.02)
    st = spp_moments(spp)
    expected = st.cov_amplitude * st.lag1_nacf**lag
    assert lag_autocovariance(spp.as_map(), lag) == pytest.approx(expected, rel=1e-8)


def test_fit_roundtrip_on_random_tuples():
    rng = np.random.default_rng(2024)
    for _ in range(25):
        mean = math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        amplitude = mean * mean * rng.uniform(0.01, 5.0)
        beta = rng.uniform(0.05, 0.9)
        lambda2 = (1.0 + rng.uniform(0.5, 10.0)) / mean
        spp = fit_spp(mean, amplitude, beta, lambda2)
        st = spp_moments(spp)
        assert st.mean_interarrival == pytest.approx(mean, rel=1e-9)
        assert st.cov_amplitude == pytest.approx(amplitude, rel=1e-9)
        assert st.lag1_nacf == pytest.approx(beta, rel=1e-9)
        assert spp.lambda2 == lambda2


def test_fit_preconditions():
    with pytest.raises(FitInfeasibleError) as info:
        fit_spp(10.0, 0.2, 0.1, lambda2=0.05)
    assert any("lambda2" in v for v in info.value.violations)
    with pytest.raises(FitInfeasibleError):
        fit_spp(10.0, 0.2, 1.0, lambda2=0.5)
    with pytest.raises(FitInfeasibleError):
        fit_spp(10.0, 0.0, 0.1, lambda2=0.5)


def test_near_poisson_fit_is_exponential():
    spp = fit_spp(10.0, 1e-16, 1e-6, lambda2=0.5)
    x = np.linspace(0.0, 200.0, 4001)
    gap = np.abs(spp_h2(spp).cdf(x) - (1.0 - np.exp(-x / 10.0)))
    assert gap.max() < 1e-6


def test_operating_point_fit():
    amplitude = resolve_cov_amplitude(0.1, 2.0, "rate_scaled", 0.1)
    assert amplitude == pytest.approx(0.2)
    spp = fit_spp_search(10.0, amplitude, 0.1)
    assert spp.lambda2 == pytest.approx(0.5)
    assert min(spp.lambda1, spp.r1, spp.r2) > 0


def test_fit_search_keeps_explicit_lambda2():
    assert fit_spp_search(10.0, 0.2, 0.1, lambda2=0.8).lambda2 == 0.8
    with pytest.raises(FitInfeasibleError, match="lambda2=0.05"):
        fit_spp_search(10.0, 0.2, 0.1, lambda2=0.05)
    with pytest.raises(FitInfeasibleError):
        traffic_from_spec(TrafficSpec(model="spp", arrival_rate=0.1, cov=2, beta=0.1, lambda2=0.05))


def test_cov_conventions():
    assert resolve_cov_amplitude(0.1, 3.0, "amplitude", 0.2) == 3.0
    amplitude = resolve_cov_amplitude(0.1, 1.5, "canonical", 0.2)
    spp = fit_spp(10.0, amplitude, 0.2, 0.5)
    assert spp_moments(spp).cov_canonical == pytest.approx(1.5, rel=1e-9)
    with pytest.raises(FitInfeasibleError):
        resolve_cov_amplitude(0.1, 0.8, "canonical", 0.2)


def test_traffic_from_spec_models():
    poisson, none = traffic_from_spec(TrafficSpec(model="poisson", arrival_rate=0.4))
    assert none is None and poisson.is_poisson
    assert arrival_rate(poisson) == pytest.approx(0.4)

    process, spp = traffic_from_spec(TrafficSpec())
    assert spp is not None
    assert arrival_rate(process) == pytest.approx(0.1, rel=1e-12)

    spec = TrafficSpec(
        model="map",
        arrival_rate=2.0,
        lambda0=[[-2.0, 1.0], [1.0, -3.0]],
        lambda1=[[1.0, 0.0], [0.0, 2.0]],
        scale_map_to_rate=True,
    )
    scaled, _ = traffic_from_spec(spec)
    assert arrival_rate(scaled) == pytest.approx(2.0, rel=1e-12)


def fitted_tuples(rng: np.random.Generator, n: int = 25):
    """Feasible (mean, amplitude, beta, lambda2) with mild lag correlation."""
    for _ in range(n):
        mean = math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        amplitude = mean * mean * rng.uniform(0.02, 0.2)
        beta = rng.uniform(0.05, 0.4)
        lambda2 = rng.uniform(2.0, 6.0) / mean
        yield mean, amplitude, beta, lambda2


@pytest.mark.slow
def test_simulated_fits_match_their_statistics():
    rng = np.random.default_rng(41)
    outside = 0
    for mean, amplitude, beta, lambda2 in fitted_tuples(rng):
        spp = fit_spp(mean, amplitude, beta, lambda2)
        # consecutive draws are correlated; 2e6 of them keep KS noise well under 0.002
        x = sample_map_interarrivals(spp.as_map(), 2_000_000, rng)

        statistic = stats.kstest(x, spp_h2(spp).cdf).statistic
        assert statistic <= 0.002, (mean, amplitude, beta, lambda2)

        centred = x - x.mean()
        products = centred[:-1] * centred[1:]
        batches = products[: products.size // 50 * 50].reshape(50, -1).mean(axis=1)
        standard_error = batches.std(ddof=1) / math.sqrt(batches.size)
        gap = abs(products.mean() - amplitude * beta)
        assert gap <= 4 * standard_error, (mean, amplitude, beta, lambda2)
        outside += gap > 3 * standard_error
    # at most one of the 25 tuples may land between 3 and 4 standard errors
    assert outside <= 1

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import lemma_sides
from voight.stability import (LemmaInputs, PeriodicBox, Scheme, audit_inputs, check, check_nse_explicit,
                              check_nse_semiimplicit, check_nsv, d5_constant, d6_constant,
                              default_semiimplicit_constants, max_k_nse_explicit, max_k_nse_semiimplicit,
                              max_k_nsv, random_solenoidal, run_energy_audit, scheme_step, taylor_green)


def random_inputs(rng, scheme=None):
    p = LemmaInputs(k=10 ** rng.uniform(-8, -1), h=tuple(rng.uniform(0.2, 2, 2)), nu=rng.uniform(0.1, 5),
                    alpha=rng.uniform(0, 2), delta=rng.uniform(0.05, 0.95), T=rng.uniform(0.1, 5),
                    u0_norms=tuple(rng.uniform(0, 3, 2)), f_energy=rng.uniform(0, 2),
                    d0=rng.uniform(0.5, 3), d1=rng.uniform(0.5, 2), d2=rng.uniform(0.5, 3),
                    d_prime=rng.uniform(0.1, 2), d_double_prime=rng.uniform(0.1, 2))
    return p


def oracle(scheme, p):
    return lemma_sides(scheme, k=p.k, h1=p.h[0], h2=p.h[1], nu=p.nu, alpha=p.alpha, delta=p.delta, T=p.T,
                       l2=p.u0_norms[0], h1n=p.u0_norms[1], F=p.f_energy, d0=p.d0, d1=p.d1, d2=p.d2_value,
                       dp=p.d_prime, ddp=p.d_double_prime)


class TestInputs:
    @pytest.mark.parametrize("bad", [dict(delta=0.0), dict(delta=1.0), dict(k=2.0, T=1.0), dict(nu=0.0),
                                     dict(h=(0.0, 1.0)), dict(d0=-1.0), dict(u0_norms=(-1.0, 0.0))])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            LemmaInputs(**{"k": 0.1, **bad})

    def test_s_constants(self):
        p = LemmaInputs(k=0.1, d1=2.0)
        assert p.S2 == pytest.approx(8.0, rel=1e-15) and p.S1 == pytest.approx(16.0, rel=1e-15)


class TestConstants:
    def test_d5_unforced(self):
        assert d5_constant(LemmaInputs(k=0.1, u0_norms=(2.0, 3.0))) == 9.0

    def test_d5_forcing_only(self):
        p = LemmaInputs(k=0.1, nu=4.0, delta=1 - 1e-15, f_energy=1.0, d0=1.0)
        assert d5_constant(p) == pytest.approx(0.25, rel=1e-12)

    def test_d6(self):
        p = LemmaInputs(k=0.1, alpha=0.5, u0_norms=(2.0, 4.0), f_energy=0.5, nu=2.0, d0=2.0, T=3.0)
        assert d6_constant(p) == pytest.approx(4 + 4 + (2 + 12) * 0.5)
        assert d6_constant(LemmaInputs(k=0.1)) == 0.0

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 5))
    def test_nondecreasing_in_data(self, a, b, f, extra):
        lo = LemmaInputs(k=0.1, alpha=0.3, u0_norms=(a, b), f_energy=f)
        hi = LemmaInputs(k=0.1, alpha=0.3, u0_norms=(a + extra, b + extra), f_energy=f + extra)
        assert d5_constant(lo) <= d5_constant(hi) and d6_constant(lo) <= d6_constant(hi)


class TestCheckers:
    def test_condition_i_fails_at_unit_step(self):
        r = check_nse_explicit(LemmaInputs(k=1.0, nu=2.0, delta=0.5))
        assert r["i"].lhs == pytest.approx(8.0) and r["i"].rhs == 1 / 16
        assert not r["i"].holds and not r.verdict

    def test_vanishing_step_passes(self):
        p = LemmaInputs(k=1e-12, nu=2.0, u0_norms=(1.0, 1.0), f_energy=1.0)
        for scheme in Scheme:
            assert check(scheme, p).verdict

    def test_equality_boundary(self):
        nu, delta = 2.0, 0.3
        k = (1 - delta) / (4 * nu * 8.0)
        r = check_nse_explicit(LemmaInputs(k=k, nu=nu, delta=delta))
        assert r["i"].holds and r["i"].margin == pytest.approx(0.0, abs=1e-15)

    def test_zero_data_makes_bound_infinite(self):
        r = check_nsv(LemmaInputs(k=0.01))
        assert r.constants["d6"] == 0.0 and r["ii"].rhs == math.inf and r["ii"].holds
        assert max_k_nsv(LemmaInputs(k=0.01)) == (1 - 0.5) / (4 * 1.0 * 8.0)

    def test_gate_closed_when_nu_equals_delta(self):
        p = LemmaInputs(k=1e-9, nu=0.5, delta=0.5, u0_norms=(1.0, 1.0))
        r = check_nse_semiimplicit(p)
        assert r["gate"].rhs == 0.0 and not r["gate"].holds
        assert max_k_nse_semiimplicit(p) == 0.0

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_matches_substitution(self, scheme, rng):
        for _ in range(20):
            p = random_inputs(rng)
            got = check(scheme, p)
            for name, (lhs, rhs) in oracle(scheme.value, p).items():
                assert got[name].lhs == pytest.approx(lhs, rel=1e-12)
                assert got[name].rhs == pytest.approx(rhs, rel=1e-12)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
    def test_monotone_in_k(self, seed, shrink):
        p = random_inputs(np.random.default_rng(seed))
        for scheme in Scheme:
            if check(scheme, p).verdict:
                assert check(scheme, p.with_k(p.k * shrink)).verdict

    @given(st.integers(0, 2**32 - 1))
    def test_max_k_is_the_boundary(self, seed):
        rng = np.random.default_rng(seed)
        p = LemmaInputs(k=1e-9, nu=rng.uniform(0.6, 5), delta=rng.uniform(0.05, 0.5),
                        u0_norms=tuple(rng.uniform(0.1, 3, 2)), f_energy=rng.uniform(0, 1))
        for scheme, fn in ((Scheme.NSE_EXPLICIT, max_k_nse_explicit), (Scheme.NSV, max_k_nsv),
                           (Scheme.NSE_SEMIIMPLICIT, max_k_nse_semiimplicit)):
            kmax = fn(p)
            assert check(scheme, p.with_k(kmax * (1 - 1e-9))).verdict
            assert not check(scheme, p.with_k(kmax * (1 + 1e-6))).verdict

    def test_semiimplicit_defaults_imply_gate(self):
        p = LemmaInputs(k=1e-9, nu=2.0, delta=0.5, u0_norms=(1.0, 2.0), f_energy=0.3)
        dp, ddp = default_semiimplicit_constants(p)
        q = LemmaInputs(**{**p.__dict__, "k": min(dp / p.S2**2, ddp / (p.S1**2 * p.S2))})
        r = check_nse_semiimplicit(q)
        assert r["gate"].lhs <= r["gate"].rhs / 10 * (1 + 1e-12)

    def test_nsv_strictly_larger_step_when_data_binds(self):
        # (i) is shared; once the data condition binds NSE, NSV's lacks the S^2 factor
        p = LemmaInputs(k=1e-9, nu=1.0, delta=0.5, u0_norms=(1.0, 5.0))
        assert max_k_nsv(p) > max_k_nse_explicit(p)

    def test_small_data_tie(self):
        # both schemes are limited only by the shared condition (i)
        p = LemmaInputs(k=1e-9, nu=1.0, delta=0.5, u0_norms=(1e-3, 1e-3))
        assert max_k_nsv(p) == max_k_nse_explicit(p) == 0.5 / (4 * 8.0)

    def test_report_serializes(self):
        d = json.loads(json.dumps(check_nsv(LemmaInputs(k=0.01, u0_norms=(1, 1))).to_dict()))
        assert d["scheme"] == "nsv" and {c["name"] for c in d["conditions"]} == {"i", "ii"}


class TestPeriodicBox:
    def test_projection_is_solenoidal_and_idempotent(self, rng):
        box = PeriodicBox(12, 1.3)
        u = (rng.normal(size=(12, 12)), rng.normal(size=(12, 12)))
        v = box.project(u)
        assert np.max(np.abs(box.divergence(v))) < 1e-12
        w = box.project(v)
        assert all(np.allclose(a, b, atol=1e-13) for a, b in zip(v, w))

    def test_convection_is_energy_neutral(self, rng):
        box = PeriodicBox(16)
        u = random_solenoidal(box, rng, 3.0)
        v = (rng.normal(size=(16, 16)), rng.normal(size=(16, 16)))
        b = box.convect(u, v)
        assert abs(sum(np.sum(x * y) for x, y in zip(b, v))) < 1e-10

    def test_norms(self):
        box = PeriodicBox(16)
        u = taylor_green(box)
        assert box.h1_sq(u) == pytest.approx(sum(np.sum(a * c) for a, c in zip(box.apply_a(u), u)) * box.h**2)

    def test_schemes_agree_at_tiny_step(self, rng):
        box = PeriodicBox(16)
        u = random_solenoidal(box, rng)
        steps = [scheme_step(s, box, u, 1e-7, 1.0, 0.0) for s in Scheme]
        for s in steps[1:]:
            assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(steps[0], s))


class TestAudit:
    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_zero_data(self, scheme):
        box = PeriodicBox()
        z = (np.zeros((16, 16)), np.zeros((16, 16)))
        p = audit_inputs(box, z, k=1e-4, steps=20, nu=2.0, alpha=0.5)
        tr = run_energy_audit(scheme, p, 20, z, box)
        assert all(v == 0 for v in tr.l2_sq + tr.h1_sq + tr.inc_l2_sq)
        assert tr.bounds_hold and all(b.holds for b in tr.bounds)

    def test_certified_nsv_taylor_green(self):
        box = PeriodicBox()
        u0 = taylor_green(box, 1.0)
        probe = audit_inputs(box, u0, k=1e-9, steps=1, nu=2.0, alpha=0.5)
        k = 0.9 * max_k_nsv(probe)
        p = audit_inputs(box, u0, k=k, steps=500, nu=2.0, alpha=0.5)
        tr = run_energy_audit("nsv", p, 500, u0, box)
        assert tr.certified and tr.bounds_hold and tr.steps == 500
        assert tr.outcome == "certified, bounds hold"
        assert all(v >= 0 for v in tr.l2_sq + tr.h1_sq + tr.a_sq + tr.inc_l2_sq + tr.inc_h1_sq)

    @pytest.mark.parametrize("scheme", [Scheme.NSE_EXPLICIT, Scheme.NSE_SEMIIMPLICIT])
    def test_certified_other_schemes(self, scheme):
        box = PeriodicBox()
        u0 = taylor_green(box, 0.5)
        probe = audit_inputs(box, u0, k=1e-9, steps=1, nu=2.0)
        k = 0.9 * (max_k_nse_explicit if scheme is Scheme.NSE_EXPLICIT else max_k_nse_semiimplicit)(probe)
        tr = run_energy_audit(scheme, audit_inputs(box, u0, k=k, steps=200, nu=2.0), 200, u0, box)
        assert tr.certified and tr.bounds_hold

    def test_explicit_far_over_the_limit_blows_up(self):
        box = PeriodicBox()
        u0 = taylor_green(box, 1.0)
        nu, delta = 2.0, 0.5
        k = 100 * (1 - delta) / (4 * nu * 8 / box.h**2)
        p = audit_inputs(box, u0, k=k, steps=500, nu=nu, delta=delta)
        tr = run_energy_audit("nse_explicit", p, 500, u0, box)
        assert not tr.certified
        assert tr.blew_up or not all(b.holds for b in tr.bounds)
        assert tr.outcome.startswith("uncertified") and tr.passed

    def test_serialization(self):
        box = PeriodicBox(8)
        u0 = taylor_green(box)
        tr = run_energy_audit("nsv", audit_inputs(box, u0, k=1e-5, steps=3, nu=1.0, alpha=0.2), 3, u0, box)
        d = json.loads(tr.to_json())
        assert d["steps"] == 3 and len(list(tr.rows())) == 4

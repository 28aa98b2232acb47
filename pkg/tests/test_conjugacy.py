import random

import pytest

import critflow as cf

from conftest import (affine_map_1d, identity_map, make_field,
                      random_affine_map, random_polynomial_field,
                      square_map_1d)


REGION = cf.AnalysisRegion.of((-3, 3))
CFG = cf.SolverConfig()


@pytest.fixture
def affine_setup(quad_field):
    h = affine_map_1d(2.0, 5.0)
    g = cf.transformed_system(quad_field, h)
    return quad_field, h, g


def test_flow_conjugacy_affine_holds(affine_setup):
    f, h, g = affine_setup
    check = cf.verify_flow_conjugacy(f, g, h, [[0.0]], t_end=1.0, tol=1e-6)
    assert check.verdict == cf.HOLDS
    assert check.worst_residual < 1e-6


def test_flow_conjugacy_identity_noise_level(quad_field):
    h = identity_map(["x"], cf.AnalysisRegion.of((-5, 5)))
    g = cf.transformed_system(quad_field, h)
    check = cf.verify_flow_conjugacy(quad_field, g, h, [[-0.5], [0.0], [0.5]],
                                     t_end=1.0, tol=1e-6)
    assert check.verdict == cf.HOLDS
    assert check.worst_residual < 1e-7


def test_flow_conjugacy_mismatched_system_fails(quad_field):
    h = affine_map_1d(2.0, 5.0)
    wrong = make_field("wrong", ["y"], {}, ["y^2 - 1"])
    check = cf.verify_flow_conjugacy(quad_field, wrong, h, [[0.0], [-1.0]],
                                     t_end=1.0, tol=1e-6)
    assert check.verdict == cf.FAILS
    assert check.worst_residual > 1e-2


def test_flow_conjugacy_truncates_blowups(quad_field):
    h = affine_map_1d(1.0, 0.0)
    g = cf.transformed_system(quad_field, h)
    # x0 = 2 escapes before T = 1; the point must be truncated, not fatal
    check = cf.verify_flow_conjugacy(quad_field, g, h, [[2.0], [0.0]],
                                     t_end=1.0, tol=1e-6)
    assert check.verdict == cf.HOLDS
    truncated = [r for r in check.details if "blow-up" in r.note or "ceiling" in r.note]
    assert truncated


def test_point_mapping_affine(affine_setup):
    f, h, g = affine_setup
    t1 = cf.verify_point_mapping(f, h, g, REGION, CFG, cf.FIXED)
    assert t1.verdict == cf.HOLDS
    mapped = sorted(r.matched[0] for r in t1.details if r.matched)
    assert mapped == pytest.approx([3.0, 7.0], abs=1e-8)
    t2 = cf.verify_point_mapping(f, h, g, REGION, CFG, cf.PERPETUAL)
    assert t2.verdict == cf.HOLDS
    assert t2.details[0].matched[0] == pytest.approx(5.0, abs=1e-8)


def test_point_mapping_identity(quad_field):
    h = identity_map(["x"], cf.AnalysisRegion.of((-5, 5)))
    g = cf.transformed_system(quad_field, h)
    check = cf.verify_point_mapping(quad_field, h, g, REGION, CFG, cf.FIXED)
    assert check.verdict == cf.HOLDS
    for r in check.details:
        if r.matched:
            assert r.residual < 1e-9


def test_point_mapping_square_map_not_applicable(quad_field):
    h = square_map_1d()
    g = cf.transformed_system(quad_field, h)
    check = cf.verify_point_mapping(quad_field, h, g, REGION, CFG, cf.PERPETUAL)
    assert check.verdict == cf.NOT_APPLICABLE
    # the perpetual point maps to 0, which is not a perpetual point of g
    rec = next(r for r in check.details if r.source is not None)
    assert rec.mapped[0] == pytest.approx(0.0, abs=1e-9)
    assert rec.matched is None
    # and g's perpetual point at 1/3 has no preimage
    assert any(r.matched and abs(r.matched[0] - 1.0 / 3.0) < 1e-6
               for r in check.details if r.source is None)


def test_spectrum_preservation_affine(affine_setup):
    f, h, g = affine_setup
    check = cf.verify_spectrum_preservation(f, h, g, REGION, CFG)
    assert check.verdict == cf.HOLDS
    pairs = [r for r in check.details if r.spectrum_distance is not None]
    kinds = {r.kind for r in pairs}
    assert kinds == {cf.FIXED, cf.PERPETUAL}
    for r in pairs:
        assert r.spectrum_distance < 1e-8
        assert r.similarity_residual < 1e-9


def test_spectrum_preservation_identity(quad_field):
    h = identity_map(["x"], cf.AnalysisRegion.of((-5, 5)))
    g = cf.transformed_system(quad_field, h)
    check = cf.verify_spectrum_preservation(quad_field, h, g, REGION, CFG)
    assert check.verdict == cf.HOLDS
    for r in check.details:
        if r.spectrum_distance is not None:
            assert r.spectrum_distance < 1e-10


def test_spectrum_preservation_nonlinear_not_applicable(quad_field):
    h = square_map_1d()
    g = cf.transformed_system(quad_field, h)
    check = cf.verify_spectrum_preservation(quad_field, h, g, REGION, CFG)
    assert check.verdict == cf.NOT_APPLICABLE


def test_spectrum_preservation_singular_linear_map_not_applicable(quad_field):
    comp = cf.parse_expression("0 * x", {"x"})
    h = cf.TransformationMap("collapse", ["x"], {}, [comp],
                             cf.AnalysisRegion.of((-3, 3)), True,
                             inverse=cf.VectorMap("noinv", ["y"], {},
                                                  [cf.parse_expression("y", {"y"})]))
    g = make_field("zero", ["y"], {}, ["0"])
    check = cf.verify_spectrum_preservation(quad_field, h, g, REGION, CFG)
    assert check.verdict == cf.NOT_APPLICABLE
    assert "singular" in check.note


def test_spectrum_preservation_random_affine_2d():
    rng = random.Random(42)
    region = cf.AnalysisRegion.of((-2.5, 2.5), (-2.5, 2.5))
    cfg = cf.SolverConfig(seed_count=150)
    done = 0
    while done < 5:
        f = random_polynomial_field(rng, 2, degree=3)
        h = random_affine_map(rng, 2, region, max_cond=20.0)
        g = cf.transformed_system(f, h)
        check = cf.verify_spectrum_preservation(f, h, g, region, cfg)
        pairs = [r for r in check.details if r.spectrum_distance is not None]
        if not pairs:
            continue
        for r in pairs:
            assert r.spectrum_distance < 1e-6
            assert r.similarity_residual < 1e-7
        done += 1


def test_detect_new_points_square_map(quad_field):
    h = square_map_1d()
    g = cf.transformed_system(quad_field, h)
    check = cf.detect_new_points(quad_field, h, g, REGION, CFG)
    assert check.verdict == cf.NOT_APPLICABLE
    new_fixed = [r for r in check.details if r.kind == cf.FIXED]
    new_perp = [r for r in check.details if r.kind == cf.PERPETUAL]
    assert len(new_fixed) == 1 and abs(new_fixed[0].matched[0]) < 1e-8
    assert len(new_perp) == 1
    assert new_perp[0].matched[0] == pytest.approx(1.0 / 3.0, abs=1e-8)


def test_detect_new_points_affine_none(affine_setup):
    f, h, g = affine_setup
    check = cf.detect_new_points(f, h, g, REGION, CFG)
    assert check.verdict == cf.HOLDS
    assert check.details == ()


def test_detect_new_points_identity_none(quad_field):
    h = identity_map(["x"], cf.AnalysisRegion.of((-5, 5)))
    g = cf.transformed_system(quad_field, h)
    check = cf.detect_new_points(quad_field, h, g, REGION, CFG)
    assert check.verdict == cf.HOLDS


def test_similarity_residual_implies_small_spectrum_distance():
    # whenever the similarity identity holds tightly, spectra must agree
    rng = random.Random(7)
    region = cf.AnalysisRegion.of((-2.5, 2.5), (-2.5, 2.5))
    f = random_polynomial_field(rng, 2, degree=2)
    h = random_affine_map(rng, 2, region, max_cond=5.0)
    g = cf.transformed_system(f, h)
    check = cf.verify_spectrum_preservation(f, h, g, region,
                                            cf.SolverConfig(seed_count=120))
    for r in check.details:
        if r.similarity_residual is not None and r.similarity_residual < 1e-8:
            assert r.spectrum_distance < 1e-6


def test_run_verification_affine_all_hold(quad_field):
    h = affine_map_1d(2.0, 5.0)
    report, g = cf.run_verification(quad_field, h, REGION)
    assert report.all_accepted
    assert {c.theorem_id for c in report.checks} == set(cf.THEOREM_IDS)
    for c in report.checks:
        assert c.verdict == cf.HOLDS
    assert report.declared_linear and report.diffeomorphic


def test_run_verification_square_advisory(quad_field):
    h = square_map_1d()
    report, g = cf.run_verification(quad_field, h, REGION)
    assert report.all_accepted
    assert report.check("t1").verdict == cf.HOLDS
    assert report.check("t2").verdict == cf.NOT_APPLICABLE
    assert report.check("t3").verdict == cf.NOT_APPLICABLE
    assert report.check("r1").verdict == cf.NOT_APPLICABLE
    assert report.check("flow").verdict == cf.HOLDS


def test_run_verification_selected_theorems(quad_field):
    h = affine_map_1d(1.0, 0.0)
    report, _ = cf.run_verification(quad_field, h, REGION, theorems=("t1", "t3"))
    assert {c.theorem_id for c in report.checks} == {"t1", "t3"}
    with pytest.raises(ValueError):
        cf.run_verification(quad_field, h, REGION, theorems=("bogus",))

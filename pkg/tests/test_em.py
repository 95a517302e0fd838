import numpy as np
import pytest

from simsec.em import (
    ConfigError,
    OpCounter,
    PhaseTensor,
    SystemConfig,
    build_correlation,
    build_geometry,
    build_propagation,
    compose_G,
    composite_channel,
    diffraction_coeff,
    path_loss,
    sample_scenario,
)
from simsec.linalg import SeededRng


def small_cfg(**kw) -> SystemConfig:
    base = dict(n_users=2, n_layers=2, nx=2, ny=2)
    base.update(kw)
    return SystemConfig(**base)


def test_config_defaults_and_noise():
    cfg = SystemConfig()
    assert cfg.n_antennas == cfg.n_users == 4
    assert cfg.n_atoms == 64
    lam = 299_792_458.0 / 28e9
    assert cfg.wavelength == pytest.approx(lam)
    assert cfg.thickness == pytest.approx(5 * lam)
    assert cfg.layer_spacing == pytest.approx(5 * lam / 4)
    # -174 dBm/Hz over 10 MHz -> -104 dBm -> 3.98e-14 W
    assert cfg.noise_users[0] == pytest.approx(3.981e-14, rel=1e-3)
    assert cfg.noise_eve == pytest.approx(3.981e-14, rel=1e-3)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        SystemConfig(n_users=2, n_antennas=3)
    with pytest.raises(ConfigError):
        SystemConfig(total_power_w=0.0)
    with pytest.raises(ConfigError):
        SystemConfig(n_users=2, weights=np.array([0.5, 1.5]))
    with pytest.raises(ConfigError):
        SystemConfig(quant_bits=0)


def test_geometry_grids_centered():
    cfg = small_cfg(nx=3, ny=2, n_users=2)
    geom = build_geometry(cfg)
    assert geom.atom_units.sum(axis=0).tolist() == [0, 0]
    assert geom.antenna_units.sum() == 0
    # half-wavelength pitch between neighbors
    pos = geom.atom_positions(1)
    d01 = np.linalg.norm(pos[0] - pos[1])
    assert d01 == pytest.approx(cfg.wavelength / 2)
    assert np.all(pos[:, 2] == geom.layer_spacing)
    assert np.all(geom.antenna_positions[:, 2] == 0.0)


def test_diffraction_coeff_quarter_area_values():
    # with element area lam^2/4: d = 1.25 lam on axis gives a value
    # independent of wavelength, 0.2 + j/(12.5 pi)
    geom = build_geometry(small_cfg())
    lam = geom.wavelength
    w = diffraction_coeff(geom, 1.25 * lam, 1.0)
    assert w == pytest.approx(0.2 + 1j / (12.5 * np.pi), abs=1e-12)
    assert complex(w) == pytest.approx(0.2 + 0.025465j, abs=1e-6)

    w2 = diffraction_coeff(geom, lam, 1.0)
    assert w2 == pytest.approx(1.0 / (8 * np.pi) - 0.25j, abs=1e-12)

    other = build_geometry(small_cfg(carrier_hz=3.5e9))
    w3 = diffraction_coeff(other, 1.25 * other.wavelength, 1.0)
    assert w3 == pytest.approx(w, abs=1e-12)


def test_diffraction_coeff_rejects_bad_links():
    geom = build_geometry(small_cfg())
    with pytest.raises(ConfigError):
        diffraction_coeff(geom, 0.0, 1.0)
    with pytest.raises(ConfigError):
        diffraction_coeff(geom, 1.0, 0.0)
    with pytest.raises(ConfigError):
        diffraction_coeff(geom, 1.0, 1.1)


def test_propagation_translation_symmetry_exact():
    cfg = small_cfg(nx=3, ny=3, n_users=2)
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    w = prop.w_layers[0]
    units = geom.atom_units
    # equal in-plane offsets must give bitwise-equal entries
    n = units.shape[0]
    seen = {}
    for i in range(n):
        for j in range(n):
            key = (abs(units[i, 0] - units[j, 0]), abs(units[i, 1] - units[j, 1]))
            if key in seen:
                assert w[i, j] == seen[key]
            else:
                seen[key] = w[i, j]
    assert np.array_equal(w, w.T)
    assert len(prop.w_layers) == cfg.n_layers - 1
    assert prop.w_feed.shape == (geom.n_atoms, cfg.n_antennas)


def test_propagation_matches_scalar_formula():
    cfg = small_cfg()
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    lam = geom.wavelength
    i, j = 1, 2
    d = np.linalg.norm(geom.atom_positions(2)[i] - geom.atom_positions(1)[j])
    cos_chi = geom.layer_spacing / d
    expect = (
        geom.element_area
        * cos_chi
        / d
        * (1.0 / (2 * np.pi * d) - 1j / lam)
        * np.exp(2j * np.pi * d / lam)
    )
    assert prop.w_layers[0][i, j] == pytest.approx(expect, rel=1e-12)

    a = 0
    d_f = np.linalg.norm(geom.atom_positions(1)[i] - geom.antenna_positions[a])
    cos_f = geom.layer_spacing / d_f
    expect_f = (
        geom.element_area
        * cos_f
        / d_f
        * (1.0 / (2 * np.pi * d_f) - 1j / lam)
        * np.exp(2j * np.pi * d_f / lam)
    )
    assert prop.w_feed[i, a] == pytest.approx(expect_f, rel=1e-12)


def test_phase_tensor_validation():
    with pytest.raises(ConfigError):
        PhaseTensor(np.array([[0.0, 7.0]]))
    with pytest.raises(ConfigError):
        PhaseTensor(np.array([[-0.1, 0.0]]))
    with pytest.raises(ConfigError):
        PhaseTensor(np.zeros(4))
    pt = PhaseTensor(np.zeros((2, 4)))
    assert not pt.is_quantized
    assert np.array_equal(pt.layer_diag(1), np.ones(4, dtype=complex))


def test_correlation_structure():
    cfg = small_cfg(nx=4, ny=1, n_users=2)
    geom = build_geometry(cfg)
    corr = build_correlation(geom)
    r = corr.r
    assert np.array_equal(np.diag(r), np.ones(4))
    assert np.array_equal(r, r.T)
    # half-wavelength pitch puts every distinct pair at an integer number
    # of half wavelengths, where the sinc vanishes
    off = r - np.eye(4)
    assert np.max(np.abs(off)) < 1e-15
    s = corr.sqrt
    assert np.linalg.norm(s @ s.conj().T - r) < 1e-9


def test_path_loss_reference_values():
    cfg = small_cfg()
    lam = cfg.wavelength
    c0 = (lam / (4 * np.pi)) ** 2
    assert c0 == pytest.approx(7.26e-7, rel=1e-2)
    assert path_loss(cfg, 2.0) == pytest.approx(c0 * 2.0**-3.5, rel=1e-12)
    assert path_loss(cfg, 30.0) == pytest.approx(c0 * 30.0**-3.5, rel=1e-12)
    with pytest.raises(ConfigError):
        path_loss(cfg, 0.5)


def test_sample_scenario_deterministic_and_in_disc():
    cfg = small_cfg(n_users=2, nx=4, ny=4)
    geom = build_geometry(cfg)
    corr = build_correlation(geom)
    rng = SeededRng(99).split("trial", 0)
    a = sample_scenario(cfg, geom, corr, rng)
    b = sample_scenario(cfg, geom, corr, rng)
    assert np.array_equal(a.h_users, b.h_users)
    assert np.array_equal(a.h_eve, b.h_eve)

    center = np.array([cfg.cluster_distance_m, 0.0])
    assert np.array_equal(a.eve_xy, center)
    for k in range(cfg.n_users):
        assert np.linalg.norm(a.user_xy[k] - center) <= cfg.cluster_radius_m
        d3 = np.sqrt(
            a.user_xy[k] @ a.user_xy[k] + (cfg.bs_height_m - cfg.user_height_m) ** 2
        )
        assert a.beta_users[k] == pytest.approx(path_loss(cfg, d3), rel=1e-12)
    assert a.h_users.shape == (2, 16)
    assert np.all(np.isfinite(a.h_users.view(float)))

    c = sample_scenario(cfg, geom, corr, SeededRng(99).split("trial", 1))
    assert not np.array_equal(a.h_users, c.h_users)


def test_compose_G_single_layer_is_diagonal():
    cfg = small_cfg(n_layers=1)
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    rng = np.random.default_rng(3)
    phi = rng.uniform(0, 2 * np.pi, size=(1, geom.n_atoms))
    g = compose_G(PhaseTensor(phi), prop)
    assert np.array_equal(g, np.diag(np.exp(1j * phi[0])))


def test_compose_G_matches_naive_product_and_counts_ops():
    cfg = small_cfg(n_layers=3, nx=3, ny=2)
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    rng = np.random.default_rng(4)
    phi = rng.uniform(0, 2 * np.pi, size=(3, geom.n_atoms))
    counter = OpCounter()
    g = compose_G(PhaseTensor(phi), prop, counter)
    assert counter.dense_matmuls == 2

    ref = np.diag(np.exp(1j * phi[0]))
    for m in range(2, 4):
        ref = np.diag(np.exp(1j * phi[m - 1])) @ prop.w_layers[m - 2] @ ref
    assert np.max(np.abs(g - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_compose_G_layer_count_mismatch():
    cfg = small_cfg(n_layers=2)
    prop = build_propagation(build_geometry(cfg))
    with pytest.raises(ConfigError):
        compose_G(PhaseTensor(np.zeros((3, cfg.n_atoms))), prop)


def test_composite_channel_matches_loop():
    cfg = small_cfg(n_users=3, n_layers=2, nx=3, ny=3)
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    corr = build_correlation(geom)
    chs = sample_scenario(cfg, geom, corr, SeededRng(5))
    phi = np.random.default_rng(6).uniform(0, 2 * np.pi, size=(2, geom.n_atoms))
    g = compose_G(PhaseTensor(phi), prop)
    h_users, h_eve = composite_channel(chs, g, prop)
    for k in range(3):
        ref = prop.w_feed.conj().T @ g.conj().T @ chs.h_users[k]
        assert np.max(np.abs(h_users[k] - ref)) < 1e-14
    ref_e = prop.w_feed.conj().T @ g.conj().T @ chs.h_eve
    assert np.max(np.abs(h_eve - ref_e)) < 1e-14
    assert h_users.shape == (3, 3)

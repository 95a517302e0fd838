"""Stacked-metasurface transmitter model.

Builds the element geometry, the inter-layer diffraction matrices, the
spatial correlation of the radiating layer, path losses, and correlated
Rayleigh user/eavesdropper channels; composes the cascaded wave-domain
beamforming matrix and the effective antenna-to-receiver channels.

Conventions: layers are stacked along +z at spacing ``thickness / M``;
the antenna feed is a centered x-axis line array one layer spacing before
the first surface; meta-atoms form a centered square grid with
half-wavelength pitch.  In-plane positions are kept as integer multiples
of a quarter wavelength so equal element offsets give bitwise-equal
matrix entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SeededRng, psd_sqrt, sample_cn

C_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Scenario configuration violates a model assumption."""


@dataclass
class SystemConfig:
    """All scenario constants; defaults follow the reference deployment."""

    n_users: int = 4                    # K
    n_layers: int = 4                   # M
    nx: int = 8                         # meta-atoms along x
    ny: int = 8                         # meta-atoms along y
    n_antennas: int | None = None       # L; must equal K (one stream per antenna)
    quant_bits: int | None = None       # None = continuous phase shifters
    carrier_hz: float = 28e9
    bandwidth_hz: float = 10e6
    noise_psd_dbm: float = -174.0
    total_power_w: float = 1.0          # P_A
    pathloss_exp: float = -3.5
    ref_distance_m: float = 1.0
    sim_thickness_m: float | None = None  # default: 5 wavelengths
    bs_height_m: float = 15.0
    user_height_m: float = 1.65
    cluster_distance_m: float = 30.0
    cluster_radius_m: float = 10.0
    weights: np.ndarray | None = None       # per-user weight in [0, 1]
    qos_min_rate: np.ndarray | None = None  # per-user min rate (bits/s/Hz), optional
    noise_user_w: np.ndarray | None = None  # per-user noise power, overrides PSD
    noise_eve_w: float | None = None

    def __post_init__(self):
        if self.n_antennas is None:
            self.n_antennas = self.n_users
        if self.n_antennas != self.n_users:
            raise ConfigError(
                f"single-stream-per-antenna model requires L == K, "
                f"got L={self.n_antennas}, K={self.n_users}"
            )
        if self.n_users < 1 or self.n_layers < 1 or self.nx < 1 or self.ny < 1:
            raise ConfigError("counts must be positive")
        if self.total_power_w <= 0 or self.carrier_hz <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("power, carrier and bandwidth must be positive")
        if self.quant_bits is not None and self.quant_bits < 1:
            raise ConfigError("quant_bits must be >= 1 or None")
        w = self.weight_vector
        if np.any(w < 0) or np.any(w > 1):
            raise ConfigError("user weights must lie in [0, 1]")
        if len(w) != self.n_users:
            raise ConfigError("weights length must equal n_users")
        if self.noise_user_w is not None:
            nu = np.atleast_1d(self.noise_user_w)
            if len(nu) != self.n_users:
                raise ConfigError("noise_user_w length must equal n_users")
            if np.any(nu <= 0):
                raise ConfigError("noise powers must be positive")
        if self.noise_eve_w is not None and self.noise_eve_w <= 0:
            raise ConfigError("noise powers must be positive")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_hz

    @property
    def n_atoms(self) -> int:
        return self.nx * self.ny

    @property
    def thickness(self) -> float:
        return 5.0 * self.wavelength if self.sim_thickness_m is None else self.sim_thickness_m

    @property
    def layer_spacing(self) -> float:
        return self.thickness / self.n_layers

    @property
    def element_area(self) -> float:
        return (self.wavelength / 2.0) ** 2

    @property
    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.n_users)
        return np.asarray(self.weights, dtype=float)

    @property
    def noise_users(self) -> np.ndarray:
        """Per-user receiver noise power in W."""
        if self.noise_user_w is not None:
            return np.asarray(self.noise_user_w, dtype=float)
        return np.full(self.n_users, self._psd_noise_w())

    @property
    def noise_eve(self) -> float:
        return self._psd_noise_w() if self.noise_eve_w is None else float(self.noise_eve_w)

    def _psd_noise_w(self) -> float:
        dbm = self.noise_psd_dbm + 10.0 * np.log10(self.bandwidth_hz)
        return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass
class SimGeometry:
    """Element layout plus the pairwise link distances/obliquities."""

    wavelength: float
    layer_spacing: float
    element_area: float
    n_layers: int
    atom_units: np.ndarray      # (N, 2) int, in-plane position in quarter wavelengths
    antenna_units: np.ndarray   # (L,) int, feed x position in quarter wavelengths
    d_inter: np.ndarray         # (N, N) adjacent-layer atom-to-atom distances [m]
    cos_inter: np.ndarray       # (N, N) obliquity cosines for those links
    d_feed: np.ndarray          # (N, L) antenna-to-first-layer distances [m]
    cos_feed: np.ndarray        # (N, L)
    d_plane: np.ndarray         # (N, N) in-plane atom spacing within a layer [m]

    @property
    def n_atoms(self) -> int:
        return self.atom_units.shape[0]

    def atom_positions(self, layer: int) -> np.ndarray:
        """3-D coordinates (m) of the meta-atoms in layer 1..M."""
        if not 1 <= layer <= self.n_layers:
            raise ConfigError(f"layer index {layer} outside 1..{self.n_layers}")
        q = self.wavelength / 4.0
        xy = self.atom_units * q
        z = np.full((self.n_atoms, 1), layer * self.layer_spacing)
        return np.hstack([xy, z])

    @property
    def antenna_positions(self) -> np.ndarray:
        q = self.wavelength / 4.0
        x = self.antenna_units * q
        return np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=1)


def build_geometry(cfg: SystemConfig) -> SimGeometry:
    """Lay out antennas and layers and precompute all link geometry."""
    lam = cfg.wavelength
    q = lam / 4.0
    dz = cfg.layer_spacing

    # centered grids in integer quarter-wavelength units (half-wavelength pitch)
    ix, iy = np.meshgrid(np.arange(cfg.nx), np.arange(cfg.ny), indexing="ij")
    atom_units = np.stack(
        [2 * ix.ravel() - (cfg.nx - 1), 2 * iy.ravel() - (cfg.ny - 1)], axis=1
    )
    antenna_units = 2 * np.arange(cfg.n_antennas) - (cfg.n_antennas - 1)

    dx_units = atom_units[:, 0][:, None] - atom_units[:, 0][None, :]
    dy_units = atom_units[:, 1][:, None] - atom_units[:, 1][None, :]
    r2_plane = (dx_units * q) ** 2 + (dy_units * q) ** 2
    d_inter = np.sqrt(r2_plane + dz * dz)
    cos_inter = dz / d_inter
    d_plane = np.sqrt(r2_plane)

    fx_units = atom_units[:, 0][:, None] - antenna_units[None, :]
    fy_units = atom_units[:, 1][:, None]
    d_feed = np.sqrt((fx_units * q) ** 2 + (fy_units * q) ** 2 + dz * dz)
    cos_feed = dz / d_feed

    return SimGeometry(
        wavelength=lam,
        layer_spacing=dz,
        element_area=cfg.element_area,
        n_layers=cfg.n_layers,
        atom_units=atom_units,
        antenna_units=antenna_units,
        d_inter=d_inter,
        cos_inter=cos_inter,
        d_feed=d_feed,
        cos_feed=cos_feed,
        d_plane=d_plane,
    )


def diffraction_coeff(geom: SimGeometry, d, cos_chi, lam: float | None = None):
    """Scalar inter-element propagation gain for a link of length d.

    Huygens secondary-source model: the element of area A illuminates a
    point at distance d and obliquity cosine cos_chi with complex gain
    (A cos_chi / d) (1/(2 pi d) - j/lam) e^{j 2 pi d / lam}.
    """
    lam = geom.wavelength if lam is None else lam
    d = np.asarray(d, dtype=float)
    cos_chi = np.asarray(cos_chi, dtype=float)
    if np.any(d <= 0):
        raise ConfigError("link distance must be positive (coincident elements?)")
    if np.any(cos_chi <= 0) or np.any(cos_chi > 1):
        raise ConfigError("obliquity cosine must lie in (0, 1]")
    amp = geom.element_area * cos_chi / d
    rad = 1.0 / (2.0 * np.pi * d) - 1j / lam
    return amp * rad * np.exp(2j * np.pi * d / lam)


@dataclass
class PropagationSet:
    """Fixed diffraction matrices: feed-to-layer-1 and layer-to-layer."""

    w_feed: np.ndarray            # (N, L): antenna l -> layer-1 atom n
    w_layers: list = field(default_factory=list)  # M-1 entries of (N, N): layer m-1 -> m

    @property
    def n_layers(self) -> int:
        return len(self.w_layers) + 1


def build_propagation(geom: SimGeometry) -> PropagationSet:
    """Evaluate the diffraction coefficient on every inter-element link.

    All layer pairs share the same grid and spacing, so a single matrix
    serves every m >= 2.
    """
    w_feed = diffraction_coeff(geom, geom.d_feed, geom.cos_feed)
    w_inter = diffraction_coeff(geom, geom.d_inter, geom.cos_inter)
    w_inter.setflags(write=False)
    w_feed.setflags(write=False)
    return PropagationSet(w_feed=w_feed, w_layers=[w_inter] * (geom.n_layers - 1))


@dataclass
class PhaseTensor:
    """Per-layer, per-atom phase configuration on [0, 2*pi)."""

    phi: np.ndarray                      # (M, N) radians
    indices: np.ndarray | None = None    # codeword indices when quantized
    codebook_mode: str | None = None     # "full-circle" or "half-circle"

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.ndim != 2:
            raise ConfigError(f"phase tensor must be (layers, atoms), got {self.phi.shape}")
        if not np.all(np.isfinite(self.phi)):
            raise ConfigError("phases contain non-finite entries")
        if np.any(self.phi < 0) or np.any(self.phi >= 2 * np.pi):
            raise ConfigError("phases must lie in [0, 2*pi)")

    @property
    def is_quantized(self) -> bool:
        return self.indices is not None

    def layer_diag(self, m: int) -> np.ndarray:
        """Unit-modulus diagonal entries e^{j phi} of layer m (1-based)."""
        return np.exp(1j * self.phi[m - 1])


@dataclass
class CorrelationModel:
    """Spatial correlation of the radiating layer under isotropic scattering."""

    r: np.ndarray        # (N, N) real symmetric, unit diagonal
    sqrt: np.ndarray     # (N, N) Hermitian PSD square root of r
    distances: np.ndarray  # (N, N) in-plane spacings [m]


def build_correlation(geom: SimGeometry) -> CorrelationModel:
    r = np.sinc(2.0 * geom.d_plane / geom.wavelength)
    np.fill_diagonal(r, 1.0)
    return CorrelationModel(r=r, sqrt=psd_sqrt(r), distances=geom.d_plane)


def path_loss(cfg: SystemConfig, distance_m: float) -> float:
    """Distance power-law gain beta = C0 (d/d0)^exp with C0 = (lam/4 pi d0)^2."""
    if distance_m <= cfg.ref_distance_m:
        raise ConfigError(
            f"link distance {distance_m} m must exceed reference {cfg.ref_distance_m} m"
        )
    c0 = (cfg.wavelength / (4.0 * np.pi * cfg.ref_distance_m)) ** 2
    return c0 * (distance_m / cfg.ref_distance_m) ** cfg.pathloss_exp


@dataclass
class ChannelSet:
    """One fading realization: last-layer-to-receiver channels and path losses."""

    h_users: np.ndarray    # (K, N), row k is the channel of user k
    h_eve: np.ndarray      # (N,)
    beta_users: np.ndarray  # (K,) linear path gains
    beta_eve: float
    user_xy: np.ndarray    # (K, 2) horizontal positions [m]
    eve_xy: np.ndarray     # (2,)


def sample_scenario(
    cfg: SystemConfig,
    geom: SimGeometry,
    corr: CorrelationModel,
    rng: SeededRng,
) -> ChannelSet:
    """Draw user positions and correlated Rayleigh channels.

    Users are area-uniform in a disc of the configured radius around the
    cluster center; the eavesdropper sits at the center.  Channels are
    sqrt(beta) * R^{1/2} z with z ~ CN(0, I).
    """
    k_users = cfg.n_users
    n = geom.n_atoms
    center = np.array([cfg.cluster_distance_m, 0.0])
    dz2 = (cfg.bs_height_m - cfg.user_height_m) ** 2

    user_xy = np.zeros((k_users, 2))
    beta_users = np.zeros(k_users)
    for k in range(k_users):
        pos_gen = rng.split("position", k).generator
        while True:
            u, v = pos_gen.random(2)
            radius = cfg.cluster_radius_m * np.sqrt(u)
            theta = 2.0 * np.pi * v
            xy = center + radius * np.array([np.cos(theta), np.sin(theta)])
            dist = np.sqrt(xy @ xy + dz2)
            if dist > cfg.ref_distance_m:
                break
        user_xy[k] = xy
        beta_users[k] = path_loss(cfg, dist)

    d_eve = np.sqrt(center @ center + dz2)
    beta_eve = path_loss(cfg, d_eve)

    h_users = np.zeros((k_users, n), dtype=np.complex128)
    for k in range(k_users):
        z = sample_cn(rng.split("fading", k), n)
        h_users[k] = np.sqrt(beta_users[k]) * (corr.sqrt @ z)
    z_e = sample_cn(rng.split("fading", "eve"), n)
    h_eve = np.sqrt(beta_eve) * (corr.sqrt @ z_e)

    return ChannelSet(
        h_users=h_users,
        h_eve=h_eve,
        beta_users=beta_users,
        beta_eve=beta_eve,
        user_xy=user_xy,
        eve_xy=center,
    )


@dataclass
class OpCounter:
    """Counts dense matrix products, for complexity assertions."""

    dense_matmuls: int = 0


def compose_G(phases: PhaseTensor, prop: PropagationSet, counter: OpCounter | None = None) -> np.ndarray:
    """Cascade the layers into the wave-domain beamforming matrix.

    G = Phi_M W_M ... Phi_2 W_2 Phi_1; for a single layer G = Phi_1.
    """
    m_layers, n = phases.phi.shape
    if prop.n_layers != m_layers:
        raise ConfigError(
            f"phase tensor has {m_layers} layers, propagation set has {prop.n_layers}"
        )
    if m_layers >= 2 and prop.w_layers[0].shape != (n, n):
        raise ConfigError("atom count mismatch between phases and propagation")
    g = np.diag(phases.layer_diag(1))
    for m in range(2, m_layers + 1):
        g = prop.w_layers[m - 2] @ g
        if counter is not None:
            counter.dense_matmuls += 1
        g = phases.layer_diag(m)[:, None] * g
    return g


def composite_channel(chs: ChannelSet, g: np.ndarray, prop: PropagationSet):
    """Effective antenna-to-receiver channels through the cascade.

    Returns (H_users, h_eve) with H_users[k] = W_feed^H G^H h_users[k].
    """
    n = g.shape[0]
    if chs.h_users.shape[1] != n or prop.w_feed.shape[0] != n:
        raise ConfigError("dimension mismatch between channels, cascade and feed")
    gh = g.conj().T
    h_users = (prop.w_feed.conj().T @ (gh @ chs.h_users.T)).T
    h_eve = prop.w_feed.conj().T @ (gh @ chs.h_eve)
    return h_users, h_eve

"""Named parameter sets.

Each preset is a :class:`~spintransducer.scan.ProtocolRun` plus the figure
or table row it reproduces. Frequencies are in units of G; the NV values
are converted from 2π×MHz with G = 2π×50 MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .control import Schedule
from .model import EnsembleSpec, PhysicalParams, mhz, ns_to_G
from .scan import PhotonSettings, Protocol, ProtocolRun, combined_schedule

# NV-centre values (2π×MHz)
NV_G_AB = 28.0
NV_GAMMA_A = 0.5
NV_KAPPA = 17.0
NV_GAMMA_CO = 140.0
NV_WIDTH_SB = 6.0  # FWHM
NV_WIDTH_AB = 10.0  # FWHM
NV_N_CLASSES = 300
# stated spectral width of the incident photon, in units of G (recorded, see NV_PHOTON_T)
NV_PHOTON_BANDWIDTH = 0.028
# photon duration parameter for the NV runs: storage time of order 1/g_ab
NV_PHOTON_T = 1.0 / mhz(NV_G_AB)
NV_T_TOTAL_NS = 568.0
NV_STAGPI_T_TOTAL_NS = 25.0


@dataclass(frozen=True)
class Preset:
    name: str
    figure: str
    run: ProtocolRun


def _mw(name, figure, kind, kappa=1.0, sweep=0.0, T=100.0, delta_Q=0.0, Delta_c=0.0, detuning=50.0,
        eval_time=None) -> Preset:
    params = PhysicalParams(G=1.0, kappa_coll=kappa, delta_Q_static=delta_Q, Delta_c_static=Delta_c)
    run = ProtocolRun(params=params, protocol=Protocol(kind, sweep, T, detuning), stage="mw-only",
                      initial="spin", eval_time=eval_time, name=name)
    return Preset(name, figure, run)


def nv_params(**kw) -> PhysicalParams:
    base = dict(G=1.0, kappa_coll=mhz(NV_KAPPA), g_ab=mhz(NV_G_AB), n_spins_effective=1.0,
                gamma_a=mhz(NV_GAMMA_A), gamma_co=mhz(NV_GAMMA_CO))
    base.update(kw)
    return PhysicalParams(**base)


def nv_ensemble(n_classes: int = NV_N_CLASSES) -> EnsembleSpec:
    return EnsembleSpec(n_classes=n_classes, width_sb=mhz(NV_WIDTH_SB), width_ab=mhz(NV_WIDTH_AB),
                        lineshape="gaussian")


def _nv_photon() -> PhotonSettings:
    return PhotonSettings(T=NV_PHOTON_T, field="grid")


def _nv_ctune() -> Preset:
    photon = _nv_photon()
    # transfer sweep fills the rest of the stated total duration
    T_sweep = ns_to_G(NV_T_TOTAL_NS) - photon.t_store
    run = ProtocolRun(params=nv_params(delta_Q_static=1.1), ensemble=nv_ensemble(),
                      protocol=Protocol("ctune", 10.0, T_sweep), stage="combined", initial="photon",
                      photon=photon, name="nv-ctune-fig9")
    return Preset("nv-ctune-fig9", "Fig. 9: EIT storage + cavity sweep, NV ensemble, 300 classes", run)


def _nv_stagpi() -> Preset:
    run = ProtocolRun(params=nv_params(), ensemble=nv_ensemble(), protocol=Protocol("stagpi", detuning=28.0),
                      stage="combined", initial="photon", photon=_nv_photon(), name="nv-stagpi-fig10")
    return Preset("nv-stagpi-fig10", "Fig. 10: EIT storage + staggered pi pulses, NV ensemble, 300 classes", run)


def _eit_matched() -> Preset:
    # γ_co T = 100, C = 100, homogeneous
    params = PhysicalParams(G=1.0, kappa_coll=1.0, g_ab=5.0, gamma_a=0.1, gamma_co=10.0)
    run = ProtocolRun(params=params, protocol=Protocol("idle", T=1.0), stage="eit-only", initial="photon",
                      photon=PhotonSettings(T=10.0, field="grid", n_modes=201), name="eit-matched")
    return Preset("eit-matched", "Impedance-matched storage, gamma_co*T = 100, C = 100", run)


def _build() -> dict[str, Preset]:
    items = [
        _mw("qtune-fig4a", "Fig. 4(a): qubit sweep, delta_qk=3G, Delta_c=8G, T=100/G", "qtune",
            sweep=3.0, T=100.0, Delta_c=8.0),
        _mw("qtune-fig4b", "Fig. 4(b): qubit sweep, delta_qk=4G, Delta_c=50G, T=7650/G", "qtune",
            sweep=4.0, T=7650.0, Delta_c=50.0),
        _mw("ctune-fig6", "Fig. 6: cavity sweep, delta_Q=7.4G, Delta_ck=38G, T=100/G, read at t=60/G",
            "ctune", sweep=38.0, T=100.0, delta_Q=7.4, eval_time=60.0),
        _mw("stagpi-fig8", "Fig. 8: staggered pi pulses, kappa=0.2G, idle detuning 50G", "stagpi",
            kappa=0.2, detuning=50.0),
        _nv_ctune(),
        _nv_stagpi(),
        # Table I rows (Fig. 11 comparison); T is the starting point of the time search
        _mw("table1-stagpi-k1", "Table I / Fig. 11(a): stag-pi, kappa=G", "stagpi", kappa=1.0, detuning=50.0),
        _mw("table1-stagpi-k0.2", "Table I / Fig. 11(b): stag-pi, kappa=0.2G", "stagpi", kappa=0.2, detuning=50.0),
        _mw("table1-ctune-k1", "Table I / Fig. 11(a): c-tune, kappa=G, delta_Q=7.4G, Delta_ck=38G", "ctune",
            kappa=1.0, sweep=38.0, T=100.0, delta_Q=7.4),
        _mw("table1-ctune-k0.2", "Table I / Fig. 11(b): c-tune, kappa=0.2G, delta_Q=7.4G, Delta_ck=26G",
            "ctune", kappa=0.2, sweep=26.0, T=100.0, delta_Q=7.4),
        _mw("table1-qtune-k1", "Table I / Fig. 11(a): q-tune, kappa=G, delta_qk=4G, Delta_c=50G", "qtune",
            kappa=1.0, sweep=4.0, T=7650.0, Delta_c=50.0),
        _mw("table1-qtune-k0.2", "Table I / Fig. 11(b): q-tune, kappa=0.2G, delta_qk=0.4G, Delta_c=50G",
            "qtune", kappa=0.2, sweep=0.4, T=7650.0, Delta_c=50.0),
        # bases for the contour maps; the scanned axes override the sweep and static values
        _mw("qtune-contour-k1", "Fig. 3: q-tune map over (Delta_c, delta_qk), T=100/G, kappa=G", "qtune",
            kappa=1.0, sweep=3.0, T=100.0, Delta_c=8.0),
        _mw("qtune-contour-k0.2", "Fig. 5: q-tune map over (Delta_c, delta_qk), T=100/G, kappa=0.2G",
            "qtune", kappa=0.2, sweep=3.0, T=100.0, Delta_c=8.0),
        _mw("ctune-contour-k1", "Fig. 7: c-tune map over (delta_Q, Delta_ck), T=100/G, kappa=G", "ctune",
            kappa=1.0, sweep=38.0, T=100.0, delta_Q=7.4),
        _mw("ctune-contour-k0.2", "Fig. 7: c-tune map over (delta_Q, Delta_ck), T=100/G, kappa=0.2G",
            "ctune", kappa=0.2, sweep=26.0, T=100.0, delta_Q=7.4),
        _eit_matched(),
    ]
    return {p.name: p for p in items}


PRESETS = _build()


def preset_names() -> list[str]:
    return list(PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; valid names: {', '.join(PRESETS)}") from None


def preset_run(name: str) -> ProtocolRun:
    return get_preset(name).run


def preset(name: str) -> tuple[PhysicalParams, EnsembleSpec, Schedule]:
    """(params, ensemble spec, full schedule) of a named configuration."""
    run = preset_run(name)
    if run.stage == "mw-only":
        sched = run.protocol.schedule(run.params)
    else:
        sched = combined_schedule(run)
    return run.params, run.ensemble, sched


def comparison_base(coupling_ratio: float) -> dict[str, ProtocolRun]:
    """Table I runs for the protocol comparison at κ√N = coupling_ratio·G.

    The two tabulated ratios use their own rows; other ratios take the
    κ = G parameters.
    """
    key = "k0.2" if abs(coupling_ratio - 0.2) < 1e-12 else "k1"
    out = {}
    for kind in ("qtune", "ctune", "stagpi"):
        run = PRESETS[f"table1-{kind}-{key}"].run
        out[kind] = replace(run, params=replace(run.params, kappa_coll=float(coupling_ratio)))
    return out

"""Built-in technology presets (both run at a 0.85 V supply).

Process means and standard deviations follow the 16 nm tables used for the
characterization (3 sigma / mu = 10 %). For CMOS the tabulated L and W means
are the BSIM offsets L_int and W_int, while the standard deviation applies to
the 16 nm drawn dimensions. Electrical coefficients are a loose calibration
of the compact model, not extracted model cards.
"""
from __future__ import annotations

from .device import PolarityParams, ProcessSample, Technology, TechnologyConfig


def cmos16() -> TechnologyConfig:
    nominal = ProcessSample(Technology.CMOS16, t_oxe_n=0.95, t_oxe_p=1.0, L=16.0, W=16.0)
    return TechnologyConfig(
        name="CMOS16",
        vdd=0.85,
        temperature=300.0,
        nominal=nominal,
        sigma={"t_oxe_n": 0.0317, "t_oxe_p": 0.0334, "L": 0.26, "W": 0.26},
        nmos=PolarityParams(vth0=0.36, mobility=0.06, n_sub=1.3, clm=0.1, theta=1.5),
        pmos=PolarityParams(vth0=0.34, mobility=0.042, n_sub=1.3, clm=0.1, theta=1.5),
        l_int=1.45,
        w_int=5.0,
        c_junction=2.0e-9,
        c_overlap=1.0e-9,
        p_to_n=2.0,
        keeper_ratio=0.25,
    )


def finfet16() -> TechnologyConfig:
    nominal = ProcessSample(Technology.FINFET16, t_oxe_n=1.0, t_oxe_p=1.0, L=20.0,
                            h_fin=26.0, t_fin=12.0, n_fins=1)
    return TechnologyConfig(
        name="FINFET16",
        vdd=0.85,
        temperature=300.0,
        nominal=nominal,
        sigma={"t_oxe_n": 0.0334, "t_oxe_p": 0.0334, "L": 0.667, "h_fin": 0.867,
               "t_fin": 0.40},
        nmos=PolarityParams(vth0=0.32, mobility=0.014, n_sub=1.15, clm=0.05, theta=1.2),
        pmos=PolarityParams(vth0=0.31, mobility=0.012, n_sub=1.15, clm=0.05, theta=1.2),
        c_junction=1.9e-10,
        c_overlap=1.0e-10,
        p_to_n=1.0,
        keeper_ratio=0.25,
    )


PRESETS = {"CMOS16": cmos16, "FINFET16": finfet16}


def preset(name: str) -> TechnologyConfig:
    try:
        return PRESETS[name.upper()]()
    except KeyError:
        raise KeyError(f"unknown technology {name!r}; expected one of {sorted(PRESETS)}") from None

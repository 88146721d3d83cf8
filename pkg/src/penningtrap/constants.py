"""Physical constants and the species table.

Everything is SI; angular frequencies are in rad/s.
"""
from scipy import constants as ct

HBAR = ct.hbar
E_CHARGE = ct.e
AMU = ct.atomic_mass
KB = ct.k
TWO_PI = 2 * ct.pi

# Neutral-atom isotopic masses; the missing electron is ignored (< 1e-4 relative).
SPECIES = {
    "Be9": 9.012182 * AMU,
    "Ca40": 39.962591 * AMU,
    "Mg25": 24.985837 * AMU,
    "H1": ct.m_p,
}

BE9_MASS = SPECIES["Be9"]

# Cycling-transition linewidth (2p 2P3/2), not quoted by the experiment.
BE9_LINEWIDTH = TWO_PI * 19.4e6
COOLING_WAVELENGTH = 313e-9

QUBIT_FREQUENCY = TWO_PI * 83.2e9
# Electron-spin qubit field sensitivity, Hz per tesla.
QUBIT_FIELD_SENSITIVITY = 28e9


def species_mass(name):
    try:
        return SPECIES[name]
    except KeyError:
        raise ValueError(
            f"unknown species {name!r}; known: {', '.join(sorted(SPECIES))}"
        ) from None

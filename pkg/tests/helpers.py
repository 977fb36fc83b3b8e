from t2sl.model import Coupling, MechanicalMode, OpticalMode, SystemSpec


def simple_spec(kappa=1.0, detuning=0.0, n_p=0.0, gamma=0.1, omega_m=1.0, n_m=0.0, g1=0.0, g2=0.0, modulation=None):
    return SystemSpec([OpticalMode(kappa, detuning, n_p)], [MechanicalMode(gamma, omega_m, n_m)],
                      [Coupling(0, 0, g1, g2)], modulation)


def two_mode_spec():
    """Two optical and two mechanical modes with cross couplings."""
    return SystemSpec(
        [OpticalMode(1.0, -0.3, 0.1), OpticalMode(0.7, 0.2, 0.0)],
        [MechanicalMode(0.05, 1.0, 2.0), MechanicalMode(0.08, 1.7, 0.5)],
        [Coupling(0, 0, 0.1, 0.0), Coupling(1, 1, 0.05, 0.0), Coupling(0, 1, 0.03, 0.0)],
    )


def random_state(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)

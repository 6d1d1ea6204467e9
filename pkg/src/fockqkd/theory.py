"""Closed-form reference curves for the built-in experiments.

These are computed from single-photon amplitude algebra and textbook HOM
expressions, independently of the pool machinery, so they can judge it.
"""

import math

import numpy as np

from .units import db_to_transmission


def mzi_ideal(phase):
    """(p_D1, p_D2) for a balanced lossless MZI with ideal detectors."""
    c = np.cos(phase)
    return (1 + c) / 2, (1 - c) / 2


def mzi_arrival(phase, bs1=(0.5, 0.5, 0.0), bs2=(0.5, 0.5, 0.0), upper_loss_db=0.0,
                lower_loss_db=0.0):
    """Photon arrival probabilities at D1 (c) and D2 (d) of the built-in MZI.

    The photon enters the first splitter on input b; the upper arm joins
    the second splitter on input a and the lower arm (with the phase
    modulator) on input b.  Splitters are (T, R, loss_db) with the map
    a -> sqrt(T) c - sqrt(R) d, b -> sqrt(R) c + sqrt(T) d.
    """
    t1, r1, l1 = bs1
    t2, r2, l2 = bs2
    e1, e2 = db_to_transmission(l1), db_to_transmission(l2)
    upper = math.sqrt(e1 * r1 * db_to_transmission(upper_loss_db))
    lower = math.sqrt(e1 * t1 * db_to_transmission(lower_loss_db)) * np.exp(1j * np.asarray(phase))
    amp_c = upper * math.sqrt(e2 * t2) + lower * math.sqrt(e2 * r2)
    amp_d = -upper * math.sqrt(e2 * r2) + lower * math.sqrt(e2 * t2)
    return np.clip(np.abs(amp_c) ** 2, 0.0, 1.0), np.clip(np.abs(amp_d) ** 2, 0.0, 1.0)


def single_photon_click(p_arrive, efficiency=1.0, dark_probability=0.0, afterpulse=0.0):
    """Click probability when at most one photon arrives with probability ``p_arrive``."""
    p_arrive = np.asarray(p_arrive)
    miss = (1 - p_arrive * efficiency) * (1 - dark_probability) * (1 - afterpulse)
    return np.clip(1 - miss, 0.0, 1.0)


def hom_polarization(delta_theta):
    """Coincidence probability for linear polarizations ``delta_theta`` apart."""
    return np.sin(delta_theta) ** 2 / 2


def hom_delay(delay, sigma):
    """Coincidence probability for Gaussian photons offset by ``delay`` seconds."""
    return 0.5 - 0.5 * np.exp(-((sigma * np.asarray(delay)) ** 2))


def fwhm(sigma):
    return 2.0 * math.sqrt(2.0 * math.log(2.0)) * sigma

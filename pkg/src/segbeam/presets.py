"""Named experiment presets for the simulated scenes.

Physical parameters (array, frequencies, SNR/INR, block lengths, birth and
death probabilities, ``C = 4.8`` and ``tau = 5`` for the birth-death OSB)
are kept as published. Run length and trial count are reduced for desk use:

===========  ==============  ==============
preset       horizon          trials
===========  ==============  ==============
abrupt_a     1200 (8 blocks)  20
pw_bearing   5000 (20000/4)   20 (200/10)
pw_time      5000 (20000/4)   20 (200/10)
birth_death  5000 (20000/4)   20 (200/10)
osb_demo     1000             20
===========  ==============  ==============

Where no penalty is published the segmenters use ``c_rel = 4/3``, i.e.
``C = 4/3 * p * noise floor`` (see :func:`segbeam.segmentation.relative_penalty`).
"""

from __future__ import annotations

from typing import Callable, Dict, List

from .config import BeamformerSpec, BtrSpec, ExperimentConfig
from .scenarios import ABRUPT_GEOMETRY, AIR_GEOMETRY, ArrayGeometry, ConfigError, ScenarioConfig

DESK_TRIALS = 20
DESK_HORIZON = 5000
SLIDING_WINDOWS = (32, 64, 128, 256, 512, 1024)
C_REL = 4.0 / 3.0

# Four-element variant of the abrupt-scene array for the changepoint demo.
DEMO_GEOMETRY = ArrayGeometry(4, 0.2, 1440.0, 3600.0)
DEMO_SWITCHES = (200, 450, 700, 850)


def _windows() -> List[BeamformerSpec]:
    return [BeamformerSpec.make("sliding_mpdr", K=K) for K in SLIDING_WINDOWS]


def _tracking_roster(**osb_params) -> List[BeamformerSpec]:
    return [
        BeamformerSpec.make("cbf"),
        *_windows(),
        BeamformerSpec.make("omniscient"),
        BeamformerSpec.make("osb", tau=5, **osb_params),
    ]


def abrupt_a() -> ExperimentConfig:
    scenario = ScenarioConfig(
        kind="abrupt_blocks",
        geometry=ABRUPT_GEOMETRY,
        horizon=1200,
        target_snr_db=-9.0,
        inr_db=(20.0, 25.0),
        n_active=2,
        block_len=150,
        suppression_band=(3.0, 60.0),
    )
    roster = [
        BeamformerSpec.make("cbf"),
        BeamformerSpec.make("batch_capon"),
        BeamformerSpec.make("adaptive_mvdr"),
        BeamformerSpec.make("bsb", c_rel=C_REL),
    ]
    return ExperimentConfig(scenario, roster, trials=DESK_TRIALS, btr=BtrSpec("bsb"))


def pw_bearing() -> ExperimentConfig:
    scenario = ScenarioConfig(
        kind="piecewise_bearing",
        geometry=AIR_GEOMETRY,
        horizon=DESK_HORIZON,
        target_snr_db=-5.0,
        inr_db=11.0,
        pool_size=4,
        suppression_band=(4.0, 15.0),
        block_len=500,
        jitter=30,
    )
    return ExperimentConfig(
        scenario, _tracking_roster(c_rel=C_REL), trials=DESK_TRIALS, btr=BtrSpec("osb")
    )


def pw_time() -> ExperimentConfig:
    scenario = ScenarioConfig(
        kind="piecewise_time",
        geometry=AIR_GEOMETRY,
        horizon=DESK_HORIZON,
        target_snr_db=-5.0,
        inr_db=12.0,
        pool_size=6,
        suppression_band=(3.0, 15.0),
        n_active=2,
        block_len=500,
        jitter=50,
    )
    return ExperimentConfig(
        scenario, _tracking_roster(c_rel=C_REL), trials=DESK_TRIALS, btr=BtrSpec("osb")
    )


def birth_death() -> ExperimentConfig:
    scenario = ScenarioConfig(
        kind="birth_death",
        geometry=AIR_GEOMETRY,
        horizon=DESK_HORIZON,
        target_snr_db=-5.0,
        inr_db=12.0,
        pool_size=8,
        suppression_band=(3.0, 15.0),
        p_birth=0.02,
        p_death=0.001,
        max_active=2,
    )
    roster = _tracking_roster(C=4.8) + [
        BeamformerSpec.make("osb", label="osb_crel", tau=5, c_rel=C_REL)
    ]
    return ExperimentConfig(scenario, roster, trials=DESK_TRIALS, btr=BtrSpec("osb"))


def osb_demo() -> ExperimentConfig:
    """Abrupt scene with interferer switches at 200, 450, 700 and 850."""
    scenario = ScenarioConfig(
        kind="abrupt_blocks",
        geometry=DEMO_GEOMETRY,
        horizon=1000,
        target_snr_db=-9.0,
        inr_db=(20.0, 25.0),
        n_active=2,
        switch_times=DEMO_SWITCHES,
        suppression_band=(3.0, 60.0),
    )
    roster = [
        BeamformerSpec.make("cbf"),
        BeamformerSpec.make("adaptive_mvdr"),
        BeamformerSpec.make("omniscient"),
        BeamformerSpec.make("bsb", C=12.0),
        BeamformerSpec.make("osb", C=12.0, tau=5),
    ]
    return ExperimentConfig(scenario, roster, trials=DESK_TRIALS, btr=BtrSpec("osb"))


PRESETS: Dict[str, Callable[[], ExperimentConfig]] = {
    "abrupt_a": abrupt_a,
    "pw_bearing": pw_bearing,
    "pw_time": pw_time,
    "birth_death": birth_death,
    "osb_demo": osb_demo,
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

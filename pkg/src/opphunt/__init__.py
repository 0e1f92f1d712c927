"""Continuous-time opportunity-hunting game: transfinite histories, strategies,
a seeded play sampler, closed-form payoffs and Markov equilibrium checks."""

__version__ = "0.1.0"

from .ordinal import Ordinal, OMEGA, parse as parse_ordinal  # noqa: E402
from .history import History, serialize, parse, zeno_example_history, validate  # noqa: E402
from .strategy import (DelayDistribution, atom, deterministic, exponential, exponential_dist,  # noqa: E402
                       mix, mixture, never, never_dist, reactive, stationary, strategy_from_spec,
                       zeno_schedule)
from .engine import GameParams, SimConfig, sample_play, simulate_batch  # noqa: E402
from .payoff import (evaluate_recursive, lambda_ratio, markov_value, markov_value_for,  # noqa: E402
                     payoff_report)
from .equilibrium import (DeviationFamily, best_markov_response,  # noqa: E402
                          extract_markov_eps_best_response, probe_nonmarkov_deviations, verify_mpe)

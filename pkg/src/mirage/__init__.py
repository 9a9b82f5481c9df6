"""Murder-mystery social-deduction simulation and evaluation harness."""

from __future__ import annotations

from .engine import Event, EventKind, Game, GameConfig, Phase, new_game, step_budget, tally_votes
from .harness import ReportBundle, RunConfig, load_config, replay, run, run_many
from .memory import SuspicionTrustLedger, UsageCounters
from .metrics import MetricReport, cic, fii, ici, kendall_tau, rouge_l, sci, tii, victory_mrr
from .script_model import Script, load_script, validate_script

__version__ = "0.1.0"

__all__ = [
    "Event", "EventKind", "Game", "GameConfig", "MetricReport", "Phase", "ReportBundle",
    "RunConfig", "Script", "SuspicionTrustLedger", "UsageCounters", "cic", "fii", "ici",
    "kendall_tau", "load_config", "load_script", "new_game", "replay", "rouge_l", "run",
    "run_many", "sci", "step_budget", "tally_votes", "tii", "validate_script", "victory_mrr",
]

"""Scenario scripts: parser, runner, reports and the command-line tool."""

from apsm.scenario.dsl import Event, Scenario, parse_scenario
from apsm.scenario.runner import Trace, TraceRecord, run

__all__ = ["Event", "Scenario", "Trace", "TraceRecord", "parse_scenario", "run"]

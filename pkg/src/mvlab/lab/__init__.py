"""Scenario configs, the two-step study driver and report output."""
from mvlab.lab.config import Diagnostics, ScenarioConfig, config_from_dict, load_config
from mvlab.lab.output import emit_outputs, render
from mvlab.lab.study import StudyReport, run_two_step_study

__all__ = ["Diagnostics", "ScenarioConfig", "config_from_dict", "load_config",
           "emit_outputs", "render", "StudyReport", "run_two_step_study"]

"""Quality screening and scenario-adaptive evaluation of LLM apps from an app store."""

__version__ = "0.1.0"

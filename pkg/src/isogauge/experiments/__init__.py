"""Experiment suites, verification batteries, plotting and the command line."""

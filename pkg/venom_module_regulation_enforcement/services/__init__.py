"""Experiment runners and output writers."""

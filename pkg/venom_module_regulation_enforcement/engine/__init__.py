"""Simulation, learning, shaping, detection and game analysis primitives."""

"""Regulation Enforcement module package."""
